"""Blockwise QAOA-aware MIMO detection with parameter-transfer template banks."""

from .constellation import Modulation
from .kbest import DetectorConfig, detect
from .model import DetectionInstance, RngStream, generate_instance
from .transfer import TemplateBank, load_bank, save_bank

__all__ = [
    "DetectionInstance",
    "DetectorConfig",
    "Modulation",
    "RngStream",
    "TemplateBank",
    "detect",
    "generate_instance",
    "load_bank",
    "save_bank",
]
