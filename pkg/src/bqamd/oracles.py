"""Desk-scale exhaustive checks run by ``bqamd oracle``."""

from __future__ import annotations

import itertools

import numpy as np

from .baselines import detect_kbest_classical
from .constellation import Modulation, points
from .kbest import DetectorConfig, detect
from .model import RngStream, generate_instance
from .objective import BlockProblem, block_cost_table, extract_hubo, spin_table
from .qaoa import QaoaParams, build_cost_vector, run_ansatz


def brute_force_ml(H, y, mod) -> np.ndarray:
    pts = points(mod)
    nt = H.shape[1]
    cands = np.array(list(itertools.product(pts, repeat=nt)))
    d = np.sum(np.abs(y[None, :] - cands @ H.T) ** 2, axis=1)
    return cands[np.argmin(d)]


def _dense_qaoa(cost, params):
    q = int(np.log2(len(cost)))
    X = np.array([[0, 1], [1, 0]], complex)
    I2 = np.eye(2)
    psi = np.full(len(cost), 2 ** (-q / 2), complex)
    for g, b in zip(params.gammas, params.betas):
        psi = np.exp(-1j * g * cost) * psi
        rot = np.cos(b) * I2 - 1j * np.sin(b) * X
        U = np.array([[1.0]])
        for _ in range(q):
            U = np.kron(rot, U)
        psi = U @ psi
    return psi


def check_hubo(rng, n=20) -> bool:
    ok = True
    for _ in range(n):
        prob = BlockProblem(0, rng.normal(size=2) + 1j * rng.normal(size=2),
                            np.triu(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))),
                            Modulation.QAM16, points(Modulation.QAM16)[rng.integers(16, size=2)], 0.3)
        poly = extract_hubo(prob)
        vals = np.array([poly.evaluate(s) for s in spin_table(prob.q)])
        ok &= bool(np.allclose(vals, block_cost_table(prob), atol=1e-9, rtol=0))
    return ok


def check_qaoa(rng, n=20) -> bool:
    ok = True
    for _ in range(n):
        q = int(rng.integers(1, 4))
        cost = rng.normal(size=1 << q)
        params = QaoaParams(rng.normal(size=2), rng.normal(size=2))
        ok &= bool(np.allclose(run_ansatz(cost, params), _dense_qaoa(cost, params), atol=1e-9))
    return ok


def check_ml(rng_stream, n=5) -> bool:
    ok = True
    cfg = DetectorConfig(b=2, T=256, K=65536, mode="exhaustive", regularize=False)
    for i in range(n):
        inst = generate_instance(4, 4, "QAM16", 10.0, rng_stream.child(i))
        x = detect(inst, cfg).x_hat
        ok &= bool(np.allclose(x, brute_force_ml(inst.H, inst.y, inst.modulation)))
    return ok


def check_kbest(rng_stream, n=10) -> bool:
    ok = True
    for i in range(n):
        inst = generate_instance(3, 3, "QPSK", 5.0, rng_stream.child(i))
        ok &= bool(np.allclose(detect_kbest_classical(inst, 4096), brute_force_ml(inst.H, inst.y, inst.modulation)))
    return ok


def run_all(seed: int = 1) -> list[tuple[str, bool]]:
    rng = np.random.default_rng(seed)
    root = RngStream(seed)
    return [
        ("hubo_reconstruction", check_hubo(rng)),
        ("qaoa_dense_oracle", check_qaoa(rng)),
        ("blockwise_ml_equivalence", check_ml(root.child(1))),
        ("classical_kbest_ml_equivalence", check_kbest(root.child(2))),
    ]
