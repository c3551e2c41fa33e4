"""Fixed-size blockwise sorted QR.

Blocks are chosen greedily: at each step the ``b`` unselected columns with the
smallest residual energy outside the span of the already-selected columns form
the next block. Because the block Frobenius energy is a sum of per-column
energies, sorting solves the subset minimization exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RankDeficientError


@dataclass
class BlockPlan:
    perm: np.ndarray
    block_sizes: tuple[int, ...]
    Q: np.ndarray
    R: np.ndarray
    y_rot: np.ndarray

    @property
    def n_blocks(self) -> int:
        return len(self.block_sizes)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.block_sizes)])

    def block(self, ell: int) -> slice:
        """Index range of block ``ell`` (0-based) in the reordered vector."""
        o = self.offsets
        return slice(int(o[ell]), int(o[ell + 1]))

    def R_block(self, i: int, j: int) -> np.ndarray:
        return self.R[self.block(i), self.block(j)]


def residual_energies(H: np.ndarray, Qsel: np.ndarray) -> np.ndarray:
    """Squared norms of the columns of ``H`` after projecting out ``span(Qsel)``."""
    H = np.asarray(H, dtype=complex)
    if Qsel is None or Qsel.shape[1] == 0:
        E = H
    else:
        E = H - Qsel @ (Qsel.conj().T @ H)
    return np.sum(np.abs(E) ** 2, axis=0)


def select_block(energies, b: int) -> np.ndarray:
    """Positions of the ``min(b, n)`` smallest energies, ascending, ties by position."""
    e = np.asarray(energies, dtype=float)
    if e.size == 0:
        raise ValueError("no candidate columns left")
    if b < 1:
        raise ValueError(f"block size must be >= 1, got {b}")
    order = np.lexsort((np.arange(e.size), e))
    return order[: min(b, e.size)]


def _orthogonalize(v: np.ndarray, Q: list[np.ndarray]) -> np.ndarray:
    # modified Gram-Schmidt, two passes
    for _ in range(2):
        for q in Q:
            v = v - q * (q.conj() @ v)
    return v


def preprocess(H: np.ndarray, y: np.ndarray, b: int) -> BlockPlan:
    H = np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    nr, nt = H.shape
    if b < 1:
        raise ValueError(f"block size must be >= 1, got {b}")
    if nt > nr:
        raise RankDeficientError(f"{nr}x{nt} channel cannot have full column rank")
    tol = 1e-12 * np.linalg.norm(H)
    unselected = list(range(nt))
    perm: list[int] = []
    sizes: list[int] = []
    qs: list[np.ndarray] = []
    while unselected:
        Qsel = np.stack(qs, axis=1) if qs else np.zeros((nr, 0), complex)
        energies = residual_energies(H[:, unselected], Qsel)
        picked = [unselected[i] for i in select_block(energies, b)]
        for j in picked:
            v = _orthogonalize(H[:, j].copy(), qs)
            nv = np.linalg.norm(v)
            if nv <= tol:
                raise RankDeficientError(f"column {j} is (numerically) dependent")
            qs.append(v / nv)
            perm.append(j)
        sizes.append(len(picked))
        unselected = [j for j in unselected if j not in picked]
    Q = np.stack(qs, axis=1)
    perm_a = np.array(perm)
    R = np.triu(Q.conj().T @ H[:, perm_a])
    R[np.diag_indices(nt)] = R.diagonal().real
    return BlockPlan(perm_a, tuple(sizes), Q, R, Q.conj().T @ y)
