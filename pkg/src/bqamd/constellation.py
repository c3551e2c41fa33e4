"""Gray-coded NR modulation mapper (TS 38.211 5.1.3) for QPSK and 16QAM.

Bit labels are read with ``b0`` as the most significant bit, so the integer
label of a symbol orders bit patterns lexicographically.
"""

from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np


class Modulation(enum.Enum):
    QPSK = 2
    QAM16 = 4

    @property
    def bits(self) -> int:
        return self.value

    @property
    def order(self) -> int:
        return 1 << self.value

    @classmethod
    def parse(cls, value) -> "Modulation":
        if isinstance(value, cls):
            return value
        key = str(value).upper().replace("-", "")
        aliases = {"QPSK": cls.QPSK, "4QAM": cls.QPSK, "QAM4": cls.QPSK,
                   "QAM16": cls.QAM16, "16QAM": cls.QAM16}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unsupported modulation {value!r}") from None


def _spin_symbol(s: np.ndarray, mod: Modulation) -> np.ndarray:
    """Apply the mapper in spin form to the last axis of ``s`` (length m)."""
    if mod is Modulation.QPSK:
        return (s[..., 0] + 1j * s[..., 1]) / np.sqrt(2.0)
    re = s[..., 0] * (2.0 - s[..., 2])
    im = s[..., 1] * (2.0 - s[..., 3])
    return (re + 1j * im) / np.sqrt(10.0)


@lru_cache(maxsize=None)
def label_bits(mod: Modulation) -> np.ndarray:
    """(M, m) bit table; row k holds the bits of label k, b0 first."""
    m = mod.bits
    k = np.arange(mod.order)[:, None]
    return ((k >> (m - 1 - np.arange(m))) & 1).astype(np.int8)


@lru_cache(maxsize=None)
def points(mod: Modulation) -> np.ndarray:
    """Constellation points ordered by bit label."""
    pts = _spin_symbol(1.0 - 2.0 * label_bits(mod), mod)
    pts.flags.writeable = False
    return pts


def map_bits(bits, mod) -> complex:
    mod = Modulation.parse(mod)
    b = np.asarray(bits)
    if b.shape != (mod.bits,):
        raise ValueError(f"{mod.name} needs {mod.bits} bits, got shape {b.shape}")
    return complex(_spin_symbol(1.0 - 2.0 * b, mod))


def bits_to_symbols(bits, mod) -> np.ndarray:
    mod = Modulation.parse(mod)
    b = np.asarray(bits)
    if b.ndim != 1 or b.size % mod.bits:
        raise ValueError(f"bit count {b.size} is not a multiple of {mod.bits}")
    return _spin_symbol(1.0 - 2.0 * b.reshape(-1, mod.bits), mod)


def map_block(spins, mod) -> np.ndarray:
    """Map a block spin vector (symbol t owns spins t*m .. t*m+m-1) to symbols."""
    mod = Modulation.parse(mod)
    s = np.asarray(spins, dtype=float)
    if s.shape[-1] % mod.bits:
        raise ValueError(f"spin count {s.shape[-1]} is not a multiple of {mod.bits}")
    return _spin_symbol(s.reshape(*s.shape[:-1], -1, mod.bits), mod)


def slice_labels(v, mod) -> np.ndarray:
    """Nearest-point labels; exact ties go to the smallest label."""
    mod = Modulation.parse(mod)
    v = np.asarray(v, dtype=complex)
    d = np.abs(v[..., None] - points(mod)) ** 2
    return np.argmin(d, axis=-1)


def slice_symbols(v, mod) -> np.ndarray:
    mod = Modulation.parse(mod)
    return points(mod)[slice_labels(v, mod)]


def symbols_to_labels(z, mod) -> np.ndarray:
    """Labels of exact constellation points (nearest-point lookup)."""
    return slice_labels(z, mod)


def labels_to_bits(labels, mod) -> np.ndarray:
    mod = Modulation.parse(mod)
    return label_bits(mod)[np.asarray(labels)].reshape(-1)


def symbols_to_bits(z, mod) -> np.ndarray:
    return labels_to_bits(symbols_to_labels(z, mod), mod)
