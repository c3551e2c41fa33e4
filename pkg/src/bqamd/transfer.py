"""SNR-indexed QAOA template banks and the sampling-based local block solvers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .constellation import Modulation, slice_labels
from .model import RngStream, generate_instance
from .objective import (
    BlockProblem,
    LambdaSchedule,
    block_cost_table,
    block_observation,
    extract_hubo,
    index_to_spins,
    lambda_of,
    lex_rank,
    mmse_hard,
    symbol_table,
)
from .preprocess import preprocess
from .qaoa import QaoaParams, build_cost_vector, direct_train, expectation, sample

BANK_VERSION = 1


class BankError(ValueError):
    pass


@dataclass
class Counters:
    local_calls: int = 0
    qaoa_inferences: int = 0
    optimizer_evals: int = 0
    ped_updates: int = 0

    def __iadd__(self, other: "Counters") -> "Counters":
        self.local_calls += other.local_calls
        self.qaoa_inferences += other.qaoa_inferences
        self.optimizer_evals += other.optimizer_evals
        self.ped_updates += other.ped_updates
        return self


@dataclass(frozen=True)
class LocalCandidate:
    spins: np.ndarray
    symbols: np.ndarray
    exact_metric: float
    freq: float


@dataclass
class CandidateList:
    """Ranked local candidates of one block, stored by basis index."""

    n_symbols: int
    mod: Modulation
    index: np.ndarray
    metric: np.ndarray
    freq: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    @property
    def q(self) -> int:
        return self.n_symbols * self.mod.bits

    @property
    def symbols(self) -> np.ndarray:
        return symbol_table(self.n_symbols, self.mod)[self.index]

    @property
    def labels(self) -> np.ndarray:
        return slice_labels(self.symbols, self.mod)

    def __iter__(self) -> Iterator[LocalCandidate]:
        Z = self.symbols
        for i, k in enumerate(self.index):
            yield LocalCandidate(index_to_spins(k, self.q), Z[i], float(self.metric[i]), float(self.freq[i]))


def rank_candidates(prob: BlockProblem, index, freq, T: int, table=None) -> CandidateList:
    """Keep the best ``T`` distinct indices by exact metric, ties lexicographic in bits."""
    if T < 1:
        raise ValueError("list width T must be >= 1")
    if table is None:
        table = block_cost_table(prob)
    index = np.asarray(index, dtype=np.int64)
    freq = np.asarray(freq, dtype=float)
    metric = table[index]
    order = np.lexsort((lex_rank(prob.q)[index], metric))[:T]
    return CandidateList(prob.n_symbols, prob.mod, index[order], metric[order], freq[order])


@dataclass
class TemplateBank:
    depth: int
    qubits: int
    block_size: int
    modulation: Modulation
    k_temp: int
    schedule: LambdaSchedule
    master_seed: int
    n_ref: int
    entries: dict[float, list[QaoaParams]]
    scores: dict[float, list[float]] = field(default_factory=dict)
    offline_budget: int | None = None
    offline_restarts: int | None = None

    def __post_init__(self):
        for snr, temps in self.entries.items():
            if not temps:
                raise BankError(f"empty template list at {snr} dB")
            for t in temps:
                if t.p != self.depth:
                    raise BankError(f"template depth {t.p} != bank depth {self.depth} at {snr} dB")

    @property
    def grid(self) -> list[float]:
        return sorted(self.entries)

    def nearest(self, rho: float) -> float:
        if not self.entries:
            raise BankError("bank has no entries")
        # min over (distance, snr) sends ties to the lower grid point
        return min(self.grid, key=lambda g: (abs(g - rho), g))

    def lookup(self, rho: float) -> list[QaoaParams]:
        return list(self.entries[self.nearest(rho)])

    def to_json(self) -> dict:
        doc = {
            "version": BANK_VERSION,
            "depth": self.depth,
            "qubits": self.qubits,
            "block_size": self.block_size,
            "modulation": self.modulation.name,
            "k_temp": self.k_temp,
            "lambda": self.schedule.as_list(),
            "master_seed": self.master_seed,
            "n_ref": self.n_ref,
            "entries": [
                {
                    "snr_db": snr,
                    "templates": [
                        {
                            "gammas": t.gammas.tolist(),
                            "betas": t.betas.tolist(),
                            "score": (self.scores.get(snr) or [math.nan] * len(self.entries[snr]))[i],
                        }
                        for i, t in enumerate(self.entries[snr])
                    ],
                }
                for snr in self.grid
            ],
        }
        if self.offline_budget is not None:
            doc["offline_budget"] = {"evals": self.offline_budget, "restarts": self.offline_restarts}
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "TemplateBank":
        try:
            if doc["version"] != BANK_VERSION:
                raise BankError(f"unsupported bank version {doc['version']!r}")
            depth = int(doc["depth"])
            qubits = int(doc["qubits"])
            block_size = int(doc["block_size"])
            mod = Modulation.parse(doc["modulation"])
            if qubits != block_size * mod.bits:
                raise BankError(f"qubits={qubits} inconsistent with b={block_size}, {mod.name}")
            entries, scores = {}, {}
            for e in doc["entries"]:
                snr = float(e["snr_db"])
                temps = []
                for t in e["templates"]:
                    if len(t["gammas"]) != depth or len(t["betas"]) != depth:
                        raise BankError(f"template at {snr} dB does not have depth {depth}")
                    temps.append(QaoaParams(t["gammas"], t["betas"]))
                entries[snr] = temps
                scores[snr] = [float(t.get("score", math.nan)) for t in e["templates"]]
            budget = doc.get("offline_budget") or {}
            return cls(
                depth=depth,
                qubits=qubits,
                block_size=block_size,
                modulation=mod,
                k_temp=int(doc["k_temp"]),
                schedule=LambdaSchedule(*map(float, doc["lambda"])),
                master_seed=int(doc["master_seed"]),
                n_ref=int(doc["n_ref"]),
                entries=entries,
                scores=scores,
                offline_budget=budget.get("evals"),
                offline_restarts=budget.get("restarts"),
            )
        except (KeyError, TypeError) as exc:
            raise BankError(f"malformed bank document: {exc!r}") from exc


def save_bank(bank: TemplateBank, path) -> None:
    # json writes floats with repr(), which round-trips doubles exactly
    Path(path).write_text(json.dumps(bank.to_json(), indent=1) + "\n", encoding="utf-8")


def load_bank(path) -> TemplateBank:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BankError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise BankError(f"{path}: bank must be a JSON object")
    return TemplateBank.from_json(doc)


@dataclass(frozen=True)
class BankConfig:
    nt: int = 16
    nr: int = 16
    modulation: Modulation = Modulation.QAM16
    snr_grid: tuple[float, ...] = tuple(range(0, 31, 2))
    block_size: int = 2
    depth: int = 4
    k_temp: int = 4
    n_ref: int = 32
    schedule: LambdaSchedule = LambdaSchedule()
    budget: int = 500
    restarts: int = 8
    lambda_scale: float | None = None


def reference_problem(cfg: BankConfig, snr_db: float, rng: RngStream) -> BlockProblem:
    """One offline training block: a random full-size block conditioned on the true suffix."""
    inst = generate_instance(cfg.nt, cfg.nr, cfg.modulation, snr_db, rng.child(0))
    plan = preprocess(inst.H, inst.y, cfg.block_size)
    full = [i for i, s in enumerate(plan.block_sizes) if s == cfg.block_size]
    ell = full[int(rng.child(1).generator().integers(len(full)))]
    z_true = inst.x[plan.perm]
    sl = plan.block(ell)
    y_bar = block_observation(plan, ell, z_true[sl.stop:])
    z_ref = mmse_hard(inst.H, inst.y, inst.sigma2, cfg.modulation)[plan.perm][sl]
    scale = cfg.nr if cfg.lambda_scale is None else cfg.lambda_scale
    lam = scale * lambda_of(snr_db, cfg.schedule)
    return BlockProblem(ell, y_bar, plan.R[sl, sl], cfg.modulation, z_ref, lam)


def reference_costs(cfg: BankConfig, snr_db: float, rng: RngStream, count: int) -> list[np.ndarray]:
    """``count`` nondegenerate offline cost vectors drawn from ``rng`` substreams."""
    costs = []
    for i in range(count):
        attempt = 0
        while True:
            c = build_cost_vector(extract_hubo(reference_problem(cfg, snr_db, rng.child(i, attempt))))
            if c.max() > c.min():
                break
            attempt += 1
        costs.append(c)
    return costs


def mean_gaps(params: list[QaoaParams], costs: list[np.ndarray], eps: float = 1e-12) -> np.ndarray:
    """Mean normalized optimality gap of each parameter vector over ``costs``."""
    gaps = np.empty((len(params), len(costs)))
    for j, c in enumerate(costs):
        lo, hi = c.min(), c.max()
        for i, th in enumerate(params):
            gaps[i, j] = (expectation(c, th) - lo) / (hi - lo + eps)
    return gaps.mean(axis=1)


def _build_entry(cfg: BankConfig, snr_db: float, rng: RngStream):
    costs = reference_costs(cfg, snr_db, rng.child(0), cfg.n_ref)
    trained = []
    for i, c in enumerate(costs):
        gen = rng.child(1, i).generator()
        trained.append(direct_train(c, cfg.depth, cfg.budget, cfg.restarts, gen).params)
    score = mean_gaps(trained, costs)
    order = np.lexsort((np.arange(len(trained)), score))[: cfg.k_temp]
    return [trained[i] for i in order], [float(score[i]) for i in order]


def build_bank(cfg: BankConfig, master_seed: int, map_fn=map) -> TemplateBank:
    """Train ``n_ref`` reference blocks per grid SNR and keep the ``k_temp`` best-transferring."""
    if not cfg.snr_grid:
        raise ValueError("SNR grid is empty")
    if cfg.n_ref < cfg.k_temp:
        raise ValueError(f"n_ref={cfg.n_ref} must be >= k_temp={cfg.k_temp}")
    root = RngStream(master_seed).child(0xBA4C)
    jobs = [(cfg, float(snr), root.child(g)) for g, snr in enumerate(cfg.snr_grid)]
    results = list(map_fn(_build_entry_star, jobs))
    entries = {float(s): r[0] for s, r in zip(cfg.snr_grid, results)}
    scores = {float(s): r[1] for s, r in zip(cfg.snr_grid, results)}
    return TemplateBank(
        depth=cfg.depth,
        qubits=cfg.block_size * cfg.modulation.bits,
        block_size=cfg.block_size,
        modulation=cfg.modulation,
        k_temp=cfg.k_temp,
        schedule=cfg.schedule,
        master_seed=master_seed,
        n_ref=cfg.n_ref,
        entries=entries,
        scores=scores,
        offline_budget=cfg.budget,
        offline_restarts=cfg.restarts,
    )


def _build_entry_star(args):
    return _build_entry(*args)


def _sampled_candidates(cost, params_list, n_shots, gen):
    found: dict[int, float] = {}
    for th in params_list:
        idx, counts = sample(cost, th, n_shots, gen)
        for k, f in zip(idx.tolist(), (counts / n_shots).tolist()):
            if f > found.get(k, -1.0):
                found[k] = f
    keys = sorted(found)
    return np.array(keys, dtype=np.int64), np.array([found[k] for k in keys])


def solve_block_transfer(
    prob: BlockProblem,
    bank: TemplateBank,
    rho: float,
    T: int,
    n_shots: int,
    gen: np.random.Generator,
    counters: Counters | None = None,
) -> CandidateList:
    """Run every stored template unchanged, pool the samples, keep the best ``T``."""
    templates = bank.lookup(rho)
    if prob.q != bank.qubits:
        raise BankError(f"block has q={prob.q} but the bank serves q={bank.qubits}")
    cost = build_cost_vector(extract_hubo(prob))
    idx, freq = _sampled_candidates(cost, templates, n_shots, gen)
    if counters is not None:
        counters.local_calls += 1
        counters.qaoa_inferences += len(templates)
    return rank_candidates(prob, idx, freq, T)


def solve_block_direct(
    prob: BlockProblem,
    p: int,
    T: int,
    n_shots: int,
    budget: int,
    restarts: int,
    gen: np.random.Generator,
    counters: Counters | None = None,
) -> CandidateList:
    cost = build_cost_vector(extract_hubo(prob))
    trained = direct_train(cost, p, budget, restarts, gen)
    idx, freq = _sampled_candidates(cost, [trained.params], n_shots, gen)
    if counters is not None:
        counters.local_calls += 1
        counters.qaoa_inferences += 1
        counters.optimizer_evals += trained.evaluations
    return rank_candidates(prob, idx, freq, T)
