"""Backward blockwise K-best detection over the block upper-staircase QR structure."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .constellation import Modulation, slice_labels
from .model import DetectionInstance, RngStream
from .objective import (
    MAX_HUBO_VARS,
    BlockProblem,
    LambdaSchedule,
    block_cost_table,
    block_observation,
    lambda_of,
    mmse_hard,
    symbol_table,
)
from .preprocess import preprocess
from .transfer import (
    CandidateList,
    Counters,
    TemplateBank,
    rank_candidates,
    solve_block_direct,
    solve_block_transfer,
)

MODES = ("transfer", "direct", "exhaustive")


@dataclass(frozen=True)
class DetectorConfig:
    b: int = 2
    p: int = 4
    T: int = 4
    K: int = 4
    n_shots: int = 1024
    mode: str = "transfer"
    regularize: bool = True
    schedule: LambdaSchedule = LambdaSchedule()
    online_budget: int = 150
    online_restarts: int = 4
    # None: weigh lambda against the per-receive-antenna metric, i.e. scale by N_r
    lambda_scale: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown solver mode {self.mode!r}; expected one of {MODES}")
        for name in ("b", "p", "T", "K", "n_shots"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def table1(cls, **overrides) -> "DetectorConfig":
        """Default 16x16 16QAM configuration."""
        return replace(cls(), **overrides)


def solve_block_exhaustive(prob: BlockProblem, T: int) -> CandidateList:
    """Top ``T`` of all ``2**q`` assignments by exact metric (freq reported as 0)."""
    if prob.q > MAX_HUBO_VARS:
        raise ValueError(f"q={prob.q} exceeds the exhaustive bound {MAX_HUBO_VARS}")
    table = block_cost_table(prob)
    n = table.size
    return rank_candidates(prob, np.arange(n), np.zeros(n), T, table=table)


@lru_cache(maxsize=None)
def _label_table(n_symbols: int, mod: Modulation) -> np.ndarray:
    return slice_labels(symbol_table(n_symbols, mod), mod)


@dataclass
class DetectionResult:
    x_hat: np.ndarray
    z_hat: np.ndarray
    perm: np.ndarray
    final_ped: float
    counters: Counters
    frontier_ped: np.ndarray = field(default=None, repr=False)
    trace: list = field(default=None, repr=False)


def detect(
    instance: DetectionInstance,
    cfg: DetectorConfig,
    bank: TemplateBank | None = None,
    rng: RngStream | np.random.Generator | None = None,
    trace: bool = False,
) -> DetectionResult:
    """Blockwise K-best detection of one channel use.

    Local solvers rank candidates by the adopted (possibly regularized) block
    cost; the global frontier is always pruned by the unregularized
    accumulated QR-domain distance.
    """
    if (cfg.mode == "transfer") != (bank is not None):
        raise ValueError("a template bank is required exactly when mode='transfer'")
    mod = instance.modulation
    if bank is not None and bank.modulation is not mod:
        raise ValueError(f"bank modulation {bank.modulation.name} != instance {mod.name}")
    if isinstance(rng, RngStream):
        gen = rng.generator()
    elif rng is None:
        gen = np.random.default_rng(0)
    else:
        gen = rng

    plan = preprocess(instance.H, instance.y, cfg.b)
    z_ref, lam = None, 0.0
    if cfg.regularize:
        z_ref = mmse_hard(instance.H, instance.y, instance.sigma2, mod)[plan.perm]
        scale = instance.nr if cfg.lambda_scale is None else cfg.lambda_scale
        lam = scale * lambda_of(instance.snr_db, cfg.schedule)
    counters = Counters()

    def local(prob: BlockProblem) -> CandidateList:
        if cfg.mode == "transfer" and prob.q == bank.qubits:
            return solve_block_transfer(prob, bank, instance.snr_db, cfg.T, cfg.n_shots, gen, counters)
        if cfg.mode == "direct":
            return solve_block_direct(
                prob, cfg.p, cfg.T, cfg.n_shots, cfg.online_budget, cfg.online_restarts, gen, counters
            )
        # exhaustive mode, or a residual block that the bank does not serve
        counters.local_calls += 1
        return solve_block_exhaustive(prob, cfg.T)

    nt = instance.nt
    # frontier: suffix symbols, their labels (for tie-breaking) and accumulated distance
    Z = np.zeros((1, 0), complex)
    labels = np.zeros((1, 0), np.int64)
    D = np.zeros(1)
    levels = []
    for ell in reversed(range(plan.n_blocks)):
        sl = plan.block(ell)
        R_ll = plan.R[sl, sl]
        child_Z, child_lab, child_D, child_parent, child_local = [], [], [], [], []
        for k in range(len(D)):
            y_bar = block_observation(plan, ell, Z[k])
            prob = BlockProblem(
                ell, y_bar, R_ll, mod,
                None if z_ref is None else z_ref[sl], lam,
            )
            cands = local(prob)
            zc = cands.symbols
            delta = np.sum(np.abs(y_bar - zc @ R_ll.T) ** 2, axis=1)
            counters.ped_updates += len(cands)
            n = len(cands)
            child_Z.append(np.hstack([zc, np.repeat(Z[k][None], n, axis=0)]))
            child_lab.append(np.hstack([_label_table(prob.n_symbols, mod)[cands.index],
                                        np.repeat(labels[k][None], n, axis=0)]))
            child_D.append(D[k] + delta)
            child_parent.append(np.full(n, k))
            child_local.append(cands.metric)
        Zc = np.vstack(child_Z)
        Lc = np.vstack(child_lab)
        Dc = np.concatenate(child_D)
        Pc = np.concatenate(child_parent)
        # TopK: distance, then lexicographic bit labels of the suffix, then parent order
        keys = (Pc,) + tuple(Lc[:, j] for j in reversed(range(Lc.shape[1]))) + (Dc,)
        keep = np.lexsort(keys)[: cfg.K]
        Z, labels, D = Zc[keep], Lc[keep], Dc[keep]
        if trace:
            levels.append({"ell": ell, "ped": D.copy(), "local_metric": np.concatenate(child_local)[keep]})

    z_hat = Z[0]
    x_hat = np.empty(nt, complex)
    x_hat[plan.perm] = z_hat
    return DetectionResult(x_hat, z_hat, plan.perm, float(D[0]), counters, D, levels if trace else None)


def local_call_bound(n_blocks: int, K: int) -> int:
    return 1 + (n_blocks - 1) * K
