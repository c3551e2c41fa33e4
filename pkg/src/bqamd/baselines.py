"""Classical reference detectors: matched filter, linear MMSE, symbolwise K-best."""

from __future__ import annotations

import numpy as np

from .constellation import points, slice_symbols
from .model import DetectionInstance
from .objective import mmse_hard
from .preprocess import preprocess


def detect_mf(instance: DetectionInstance) -> np.ndarray:
    H = instance.H
    energy = np.sum(np.abs(H) ** 2, axis=0)
    if np.any(energy == 0):
        raise ValueError("channel has a zero column")
    return slice_symbols(H.conj().T @ instance.y / energy, instance.modulation)


def detect_mmse(instance: DetectionInstance) -> np.ndarray:
    return mmse_hard(instance.H, instance.y, instance.sigma2, instance.modulation)


def detect_kbest_classical(instance: DetectionInstance, K: int = 4) -> np.ndarray:
    """Breadth-first symbolwise K-best on the residual-norm sorted QR.

    Every survivor is expanded over the whole constellation; the ``K``
    smallest accumulated distances survive (ties: symbol labels of the
    suffix, lexicographic, then parent order).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    plan = preprocess(instance.H, instance.y, 1)
    R, yt = plan.R, plan.y_rot
    pts = points(instance.modulation)
    M = len(pts)
    nt = R.shape[0]
    # survivors hold label suffixes for positions i..nt-1
    paths = [((), 0.0)]
    for i in reversed(range(nt)):
        children = []
        for parent, (suffix, d) in enumerate(paths):
            interference = sum(R[i, i + 1 + j] * pts[lab] for j, lab in enumerate(suffix))
            ybar = yt[i] - interference
            for lab in range(M):
                inc = abs(ybar - R[i, i] * pts[lab]) ** 2
                children.append((d + inc, (lab,) + suffix, parent))
        children.sort(key=lambda c: (c[0], c[1], c[2]))
        paths = [(lab, d) for d, lab, _ in children[:K]]
    best = paths[0][0]
    x = np.empty(nt, complex)
    x[plan.perm] = pts[list(best)]
    return x
