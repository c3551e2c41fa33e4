"""Exact state-vector QAOA for diagonal spin-polynomial costs.

Basis index ``k`` encodes qubit ``r`` in bit ``r`` (qubit 0 is the LSB); the
cost vector entry ``cost[k]`` is the nonconstant part of the polynomial at
the spins decoded from ``k``. Each layer applies ``exp(-i*gamma*C)`` and then
``exp(-i*beta*X)`` on every qubit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .objective import MAX_HUBO_VARS, SpinPolynomial, fwht


@dataclass(frozen=True)
class QaoaParams:
    gammas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(self.gammas, dtype=float).reshape(-1)
        b = np.ascontiguousarray(self.betas, dtype=float).reshape(-1)
        if g.size != b.size or g.size < 1:
            raise ValueError("gammas and betas must have the same positive length")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(b))):
            raise ValueError("QAOA angles must be finite")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "betas", b)

    @property
    def p(self) -> int:
        return self.gammas.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.gammas, self.betas])

    @classmethod
    def from_vector(cls, theta) -> "QaoaParams":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size % 2:
            raise ValueError("parameter vector must have even length 2p")
        p = theta.size // 2
        return cls(theta[:p], theta[p:])

    @classmethod
    def zeros(cls, p: int) -> "QaoaParams":
        return cls(np.zeros(p), np.zeros(p))

    def __eq__(self, other):
        if not isinstance(other, QaoaParams):
            return NotImplemented
        return np.array_equal(self.gammas, other.gammas) and np.array_equal(self.betas, other.betas)

    def __hash__(self):
        return hash(self.to_vector().tobytes())


def build_cost_vector(poly: SpinPolynomial) -> np.ndarray:
    if poly.q > MAX_HUBO_VARS:
        raise ValueError(f"q={poly.q} exceeds the state-vector bound {MAX_HUBO_VARS}")
    c = poly.coefficient_vector()
    c[0] = 0.0
    return fwht(c)


@numba.njit(cache=True)
def _evolve_split(cost, gammas, betas):
    n = cost.size
    re = np.full(n, 1.0 / np.sqrt(n))
    im = np.zeros(n)
    for r in range(gammas.size):
        g = gammas[r]
        for k in range(n):
            cr = np.cos(g * cost[k])
            si = np.sin(g * cost[k])
            a = re[k]
            b = im[k]
            re[k] = a * cr + b * si
            im[k] = b * cr - a * si
        # exp(-i beta X) on each qubit: [[c, -is], [-is, c]]
        c = np.cos(betas[r])
        s = np.sin(betas[r])
        stride = 1
        while stride < n:
            for hi in range(0, n, 2 * stride):
                for lo in range(hi, hi + stride):
                    o = lo + stride
                    ar = re[lo]
                    ai = im[lo]
                    br = re[o]
                    bi = im[o]
                    re[lo] = c * ar + s * bi
                    im[lo] = c * ai - s * br
                    re[o] = c * br + s * ai
                    im[o] = c * bi - s * ar
            stride <<= 1
    return re, im


@numba.njit(cache=True)
def _expect(cost, theta):
    p = theta.size // 2
    re, im = _evolve_split(cost, theta[:p], theta[p:])
    total = 0.0
    for k in range(cost.size):
        total += cost[k] * (re[k] * re[k] + im[k] * im[k])
    return total


@numba.njit(cache=True)
def _nelder_mead(cost, x0, step, budget, xatol, fatol):
    n = x0.size
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    best_x = x0.copy()
    best_f = np.inf
    nfev = 0
    for i in range(n + 1):
        x = x0.copy()
        if i > 0:
            x[i - 1] += step
        f = _expect(cost, x)
        nfev += 1
        sim[i] = x
        fs[i] = f
        if f < best_f:
            best_f = f
            best_x = x.copy()
    while nfev < budget:
        order = np.argsort(fs, kind="mergesort")
        sim = sim[order]
        fs = fs[order]
        if np.max(np.abs(fs[1:] - fs[0])) <= fatol and np.max(np.abs(sim[1:] - sim[0])) <= xatol:
            break
        xbar = np.zeros(n)
        for i in range(n):
            xbar += sim[i]
        xbar /= n
        xr = 2.0 * xbar - sim[n]
        fr = _expect(cost, xr)
        nfev += 1
        if fr < best_f:
            best_f = fr
            best_x = xr.copy()
        if fr < fs[0]:
            if nfev >= budget:
                break
            xe = 3.0 * xbar - 2.0 * sim[n]
            fe = _expect(cost, xe)
            nfev += 1
            if fe < best_f:
                best_f = fe
                best_x = xe.copy()
            if fe < fr:
                sim[n] = xe
                fs[n] = fe
            else:
                sim[n] = xr
                fs[n] = fr
        elif fr < fs[n - 1]:
            sim[n] = xr
            fs[n] = fr
        else:
            if nfev >= budget:
                break
            if fr < fs[n]:
                xc = 1.5 * xbar - 0.5 * sim[n]
                fc = _expect(cost, xc)
                accept = fc <= fr
            else:
                xc = 0.5 * (xbar + sim[n])
                fc = _expect(cost, xc)
                accept = fc < fs[n]
            nfev += 1
            if fc < best_f:
                best_f = fc
                best_x = xc.copy()
            if accept:
                sim[n] = xc
                fs[n] = fc
            else:
                for i in range(1, n + 1):
                    if nfev >= budget:
                        break
                    sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                    fs[i] = _expect(cost, sim[i])
                    nfev += 1
                    if fs[i] < best_f:
                        best_f = fs[i]
                        best_x = sim[i].copy()
    return best_x, best_f, nfev


def _cost_array(cost) -> np.ndarray:
    c = np.ascontiguousarray(cost, dtype=np.float64)
    n = c.size
    if c.ndim != 1 or n < 2 or n & (n - 1):
        raise ValueError("cost vector length must be a power of two >= 2")
    return c


def run_ansatz(cost, params: QaoaParams) -> np.ndarray:
    re, im = _evolve_split(_cost_array(cost), params.gammas, params.betas)
    return re + 1j * im


def expectation(cost, params: QaoaParams) -> float:
    return float(_expect(_cost_array(cost), params.to_vector()))


def probabilities(cost, params: QaoaParams) -> np.ndarray:
    re, im = _evolve_split(_cost_array(cost), params.gammas, params.betas)
    pr = re * re + im * im
    return pr / pr.sum()


def sample(cost, params: QaoaParams, n_shots: int, gen: np.random.Generator):
    """Measure ``n_shots`` times; returns (basis indices, counts) for observed outcomes."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    counts = gen.multinomial(n_shots, probabilities(cost, params))
    idx = np.flatnonzero(counts)
    return idx, counts[idx]


class TrainResult(NamedTuple):
    params: QaoaParams
    value: float
    evaluations: int


def ramp_start(p: int) -> np.ndarray:
    r = np.arange(1, p + 1) / p
    return np.concatenate([0.2 * r, 0.2 * (1.0 - r)])


def direct_train(
    cost,
    p: int,
    budget: int,
    restarts: int,
    gen: np.random.Generator,
    step: float = 0.1,
) -> TrainResult:
    """Multi-start Nelder-Mead on the exact expectation.

    Starts from a linear ramp plus ``restarts`` uniform draws; ``budget``
    evaluations are allowed per start. The best evaluated point wins.
    """
    if budget < 2 * p + 1:
        raise ValueError(f"budget {budget} is below the simplex size {2 * p + 1}")
    c = _cost_array(cost)
    starts = [ramp_start(p)]
    for _ in range(restarts):
        g = gen.uniform(-np.pi / 2, np.pi / 2, p)
        b = gen.uniform(-np.pi / 4, np.pi / 4, p)
        starts.append(np.concatenate([g, b]))
    best_x, best_f, total = None, np.inf, 0
    for x0 in starts:
        x, f, nfev = _nelder_mead(c, x0, step, budget, 1e-6, 1e-9)
        total += nfev
        if f < best_f:
            best_x, best_f = x, f
    return TrainResult(QaoaParams.from_vector(best_x), float(best_f), total)
