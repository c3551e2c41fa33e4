"""Conditioned block metrics, the MMSE anchor, and Gray-HUBO extraction.

Spin assignments of a q-variable block are indexed by integers ``k`` in
``[0, 2**q)``: bit ``r`` of ``k`` (LSB = variable 0) is the bit of variable
``r`` and its spin is ``1 - 2*bit``. Every module shares this convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .constellation import Modulation, _spin_symbol, slice_symbols
from .preprocess import BlockPlan

MAX_HUBO_VARS = 20
PRUNE_TOL = 1e-12


@dataclass(frozen=True)
class LambdaSchedule:
    lambda_min: float = 0.005
    lambda_max: float = 0.45
    rho_0: float = 13.0
    kappa: float = 0.55

    def as_list(self) -> list[float]:
        return [self.lambda_min, self.lambda_max, self.rho_0, self.kappa]


def lambda_of(rho_db: float, sched: LambdaSchedule = LambdaSchedule()) -> float:
    """Sigmoid regularization weight, large at low SNR and small at high SNR."""
    if not math.isfinite(sched.kappa):
        raise ValueError("kappa must be finite")
    t = sched.kappa * (rho_db - sched.rho_0)
    if t > 700.0:
        return sched.lambda_min
    return sched.lambda_min + (sched.lambda_max - sched.lambda_min) / (1.0 + math.exp(t))


def block_observation(plan: BlockPlan, ell: int, suffix) -> np.ndarray:
    """Interference-reduced observation of block ``ell`` given decisions on later blocks.

    ``suffix`` holds the symbols of blocks ``ell+1 .. L-1`` concatenated in
    block order (0-based blocks).
    """
    sl = plan.block(ell)
    rest = slice(sl.stop, None)
    z = np.asarray(suffix, dtype=complex)
    width = plan.R.shape[1] - sl.stop
    if z.shape != (width,):
        raise ValueError(f"suffix of block {ell} must have length {width}, got {z.shape}")
    return plan.y_rot[sl] - plan.R[sl, rest] @ z


def mmse_estimate(H: np.ndarray, y: np.ndarray, sigma2: float) -> np.ndarray:
    """Unsliced linear MMSE estimate ``(H^H H + sigma2 I)^-1 H^H y``."""
    if sigma2 < 0:
        raise ValueError("noise variance must be nonnegative")
    G = H.conj().T @ H + sigma2 * np.eye(H.shape[1])
    return np.linalg.solve(G, H.conj().T @ y)


def mmse_hard(H, y, sigma2, mod) -> np.ndarray:
    return slice_symbols(mmse_estimate(H, y, sigma2), mod)


def mmse_reference(H, y, sigma2, perm, block: slice, mod) -> np.ndarray:
    """Hard MMSE decisions reordered by ``perm``, restricted to one block."""
    return mmse_hard(H, y, sigma2, mod)[np.asarray(perm)][block]


@dataclass(frozen=True)
class BlockProblem:
    ell: int
    y_bar: np.ndarray
    R_diag: np.ndarray
    mod: Modulation
    z_ref: np.ndarray | None = None
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.lam > 0 and self.z_ref is None:
            raise ValueError("regularized block problem needs an MMSE reference")
        n = len(self.y_bar)
        if self.R_diag.shape != (n, n):
            raise ValueError("R_diag shape does not match the observation")
        if self.z_ref is not None and len(self.z_ref) != n:
            raise ValueError("MMSE reference length does not match the block")

    @property
    def n_symbols(self) -> int:
        return len(self.y_bar)

    @property
    def q(self) -> int:
        return self.n_symbols * self.mod.bits

    def unregularized(self) -> "BlockProblem":
        return BlockProblem(self.ell, self.y_bar, self.R_diag, self.mod)


@lru_cache(maxsize=None)
def spin_table(q: int) -> np.ndarray:
    """(2**q, q) array of spins for every basis index."""
    k = np.arange(1 << q)[:, None]
    t = 1 - 2 * ((k >> np.arange(q)) & 1)
    t.flags.writeable = False
    return t


@lru_cache(maxsize=None)
def symbol_table(n_symbols: int, mod: Modulation) -> np.ndarray:
    """(2**q, n_symbols) block symbols for every basis index."""
    t = _spin_symbol(spin_table(n_symbols * mod.bits).reshape(-1, n_symbols, mod.bits), mod)
    t.flags.writeable = False
    return t


@lru_cache(maxsize=None)
def lex_rank(q: int) -> np.ndarray:
    """Rank of each basis index in lexicographic order of its bit string (variable 0 first)."""
    k = np.arange(1 << q)
    rev = np.zeros_like(k)
    for r in range(q):
        rev |= ((k >> r) & 1) << (q - 1 - r)
    rev.flags.writeable = False
    return rev


def spins_to_index(spins) -> int:
    s = np.asarray(spins)
    return int(np.sum(((1 - s) // 2).astype(np.int64) << np.arange(s.size)))


def index_to_spins(k: int, q: int) -> np.ndarray:
    return 1 - 2 * ((int(k) >> np.arange(q)) & 1)


def _metric(prob: BlockProblem, Z: np.ndarray) -> np.ndarray:
    r = prob.y_bar - Z @ prob.R_diag.T
    f = np.sum(np.abs(r) ** 2, axis=-1)
    if prob.lam > 0:
        f = f + prob.lam * np.sum(np.abs(Z - prob.z_ref) ** 2, axis=-1)
    return f


def block_cost(prob: BlockProblem, spins) -> float:
    """Adopted local cost of one spin assignment."""
    s = np.asarray(spins, dtype=float)
    if s.shape != (prob.q,):
        raise ValueError(f"expected {prob.q} spins, got shape {s.shape}")
    z = _spin_symbol(s.reshape(prob.n_symbols, prob.mod.bits), prob.mod)
    return float(_metric(prob, z))


def block_cost_table(prob: BlockProblem) -> np.ndarray:
    """Adopted local cost at every basis index."""
    if prob.q > MAX_HUBO_VARS:
        raise ValueError(f"q={prob.q} exceeds the exhaustive bound {MAX_HUBO_VARS}")
    return _metric(prob, symbol_table(prob.n_symbols, prob.mod))


def fwht(a: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis (length 2**q)."""
    a = np.array(a, dtype=float)
    n = a.shape[-1]
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        v = a.reshape(*lead, n // (2 * h), 2, h)
        x = v[..., 0, :].copy()
        v[..., 0, :] += v[..., 1, :]
        v[..., 1, :] = x - v[..., 1, :]
        h *= 2
    return a


@dataclass(frozen=True)
class SpinPolynomial:
    """Multilinear polynomial ``constant + sum_S c_S prod_{k in S} s_k``.

    Subsets are bitmasks over variables ``0..q-1``.
    """

    q: int
    constant: float
    terms: dict[int, float] = field(default_factory=dict)

    def evaluate(self, spins) -> float:
        s = np.asarray(spins)
        total = self.constant
        for mask, c in self.terms.items():
            sign = 1
            for r in range(self.q):
                if mask >> r & 1:
                    sign *= int(s[r])
            total += c * sign
        return total

    @property
    def max_order(self) -> int:
        return max((bin(S).count("1") for S in self.terms), default=0)

    def coefficient_vector(self) -> np.ndarray:
        c = np.zeros(1 << self.q)
        c[0] = self.constant
        for mask, v in self.terms.items():
            c[mask] = v
        return c


def hubo_from_table(f: np.ndarray, prune: float = PRUNE_TOL) -> SpinPolynomial:
    """Parity-basis coefficients of a function tabulated over all basis indices."""
    n = len(f)
    q = n.bit_length() - 1
    if q > MAX_HUBO_VARS:
        raise ValueError(f"q={q} exceeds the exhaustive bound {MAX_HUBO_VARS}")
    c = fwht(f) / n
    terms = {int(S): float(c[S]) for S in np.flatnonzero(np.abs(c) >= prune) if S}
    return SpinPolynomial(q, float(c[0]), terms)


def extract_hubo(prob: BlockProblem) -> SpinPolynomial:
    return hubo_from_table(block_cost_table(prob))
