"""BER sweeps with common random numbers across detectors."""

from __future__ import annotations

import csv
import io
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .baselines import detect_kbest_classical, detect_mf, detect_mmse
from .constellation import Modulation, symbols_to_bits
from .kbest import DetectorConfig, detect
from .model import DetectionInstance, RngStream, generate_instance
from .objective import LambdaSchedule
from .transfer import BankConfig, Counters, TemplateBank, build_bank, load_bank

log = logging.getLogger(__name__)

DETECTORS = (
    "mf",
    "mmse",
    "kbest",
    "bqa_exh_reg",
    "bqa_exh_unreg",
    "bqa_direct",
    "bqa_transfer",
)
CSV_HEADER = [
    "detector", "snr_db", "trials", "bit_errors", "total_bits",
    "ber", "plot_floor", "mean_final_ped", "local_calls_mean",
]


class ConfigError(ValueError):
    pass


def parse_snr_range(text: str) -> tuple[float, ...]:
    """``"a:step:b"`` (inclusive) or a comma list."""
    if ":" in text:
        try:
            a, step, b = (float(v) for v in text.split(":"))
        except ValueError:
            raise ConfigError(f"bad SNR range {text!r}; expected a:step:b") from None
        if step <= 0 or b < a:
            raise ConfigError(f"bad SNR range {text!r}")
        n = int(np.floor((b - a) / step + 1e-9)) + 1
        return tuple(float(a + i * step) for i in range(n))
    return tuple(float(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class SweepConfig:
    nt: int = 16
    nr: int = 16
    modulation: Modulation = Modulation.QAM16
    snr_grid: tuple[float, ...] = tuple(float(s) for s in range(0, 31, 2))
    trials: int = 100
    master_seed: int = 20260101
    detectors: tuple[str, ...] = DETECTORS
    detector: DetectorConfig = DetectorConfig()
    kbest_K: int = 4
    bank_path: str | None = None
    out_path: str | None = None
    n_ref: int = 32
    k_temp: int = 4
    offline_budget: int = 500
    offline_restarts: int = 8

    def __post_init__(self):
        object.__setattr__(self, "modulation", Modulation.parse(self.modulation))
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        object.__setattr__(self, "detectors", tuple(self.detectors))

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1 (no bits would be simulated)")
        if not self.snr_grid:
            raise ConfigError("SNR grid is empty")
        unknown = [d for d in self.detectors if d not in DETECTORS]
        if unknown:
            raise ConfigError(f"unknown detectors {unknown}; choose from {list(DETECTORS)}")
        if not self.detectors:
            raise ConfigError("no detectors selected")

    def bank_config(self) -> BankConfig:
        d = self.detector
        return BankConfig(
            nt=self.nt, nr=self.nr, modulation=self.modulation, snr_grid=self.snr_grid,
            block_size=d.b, depth=d.p, k_temp=self.k_temp, n_ref=self.n_ref,
            schedule=d.schedule, budget=self.offline_budget, restarts=self.offline_restarts,
            lambda_scale=d.lambda_scale,
        )

    @classmethod
    def table1(cls, **overrides) -> "SweepConfig":
        return replace(cls(), **overrides)


def load_config(path) -> SweepConfig:
    try:
        doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> SweepConfig:
    base = SweepConfig()
    det = dict(doc.get("detector", {}))
    dkw = {}
    for key, attr in (("b", "b"), ("p", "p"), ("T", "T"), ("K", "K"), ("shots", "n_shots"),
                      ("online_budget", "online_budget"), ("online_restarts", "online_restarts"),
                      ("lambda_scale", "lambda_scale")):
        if key in det:
            dkw[attr] = det.pop(key)
    if "lambda" in det:
        dkw["schedule"] = LambdaSchedule(*map(float, det.pop("lambda")))
    if det:
        raise ConfigError(f"unknown [detector] keys: {sorted(det)}")
    bb = dict(doc.get("bank_build", {}))
    kw = dict(
        nt=int(doc.get("nt", base.nt)),
        nr=int(doc.get("nr", base.nr)),
        modulation=Modulation.parse(doc.get("modulation", base.modulation)),
        trials=int(doc.get("trials", base.trials)),
        master_seed=int(doc.get("master_seed", base.master_seed)),
        detectors=tuple(doc.get("detectors", base.detectors)),
        detector=DetectorConfig(**dkw),
        kbest_K=int(doc.get("kbest", {}).get("K", base.kbest_K)),
        bank_path=doc.get("bank", base.bank_path),
        out_path=doc.get("out", base.out_path),
        n_ref=int(bb.get("n_ref", base.n_ref)),
        k_temp=int(bb.get("k_temp", base.k_temp)),
        offline_budget=int(bb.get("budget", base.offline_budget)),
        offline_restarts=int(bb.get("restarts", base.offline_restarts)),
    )
    if "snr" in doc:
        snr = doc["snr"]
        kw["snr_grid"] = parse_snr_range(snr) if isinstance(snr, str) else tuple(map(float, snr))
    known = {"nt", "nr", "modulation", "trials", "master_seed", "detectors", "detector",
             "kbest", "bank", "out", "bank_build", "snr"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    cfg = SweepConfig(**kw)
    cfg.validate()
    return cfg


def detector_configs(cfg: SweepConfig) -> dict[str, DetectorConfig]:
    d = cfg.detector
    return {
        "bqa_exh_reg": replace(d, mode="exhaustive", regularize=True),
        "bqa_exh_unreg": replace(d, mode="exhaustive", regularize=False),
        "bqa_direct": replace(d, mode="direct", regularize=True),
        "bqa_transfer": replace(d, mode="transfer", regularize=True),
    }


@dataclass
class DetectorOutcome:
    x_hat: np.ndarray
    bit_errors: int
    final_metric: float
    counters: Counters | None


@dataclass
class TrialOutcome:
    snr_index: int
    trial: int
    digest: str
    tx_bits: np.ndarray
    results: dict[str, DetectorOutcome]


def trial_stream(master_seed: int, snr_index: int, trial: int) -> RngStream:
    return RngStream(master_seed).child(1, snr_index, trial)


def make_instance(cfg: SweepConfig, snr_index: int, trial: int) -> DetectionInstance:
    s = trial_stream(cfg.master_seed, snr_index, trial)
    return generate_instance(cfg.nt, cfg.nr, cfg.modulation, cfg.snr_grid[snr_index], s.child(0))


def run_detector(name: str, inst: DetectionInstance, cfg: SweepConfig, bank, rng: RngStream):
    if name == "mf":
        return detect_mf(inst), None
    if name == "mmse":
        return detect_mmse(inst), None
    if name == "kbest":
        return detect_kbest_classical(inst, cfg.kbest_K), None
    dcfg = detector_configs(cfg)[name]
    res = detect(inst, dcfg, bank if dcfg.mode == "transfer" else None, rng)
    return res.x_hat, res.counters


def run_trial(cfg: SweepConfig, bank, snr_index: int, trial: int) -> TrialOutcome:
    s = trial_stream(cfg.master_seed, snr_index, trial)
    inst = make_instance(cfg, snr_index, trial)
    out = {}
    for name in cfg.detectors:
        x_hat, counters = run_detector(name, inst, cfg, bank, s.child(2, zlib.crc32(name.encode())))
        errors = int(np.sum(symbols_to_bits(x_hat, cfg.modulation) != inst.tx_bits))
        metric = float(np.sum(np.abs(inst.y - inst.H @ x_hat) ** 2))
        out[name] = DetectorOutcome(x_hat, errors, metric, counters)
    return TrialOutcome(snr_index, trial, inst.digest(), inst.tx_bits, out)


_WORKER: dict = {}


def _init_worker(cfg, bank):
    _WORKER["cfg"] = cfg
    _WORKER["bank"] = bank


def _worker_task(key):
    return run_trial(_WORKER["cfg"], _WORKER["bank"], *key)


def resolve_workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("BQAMD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_trials(cfg: SweepConfig, bank: TemplateBank | None = None, workers: int | None = None) -> list[TrialOutcome]:
    """Every (snr, trial) instance, run through every selected detector."""
    cfg.validate()
    if "bqa_transfer" in cfg.detectors and bank is None:
        if not cfg.bank_path:
            raise ConfigError("transfer detector selected but no template bank given")
        if not Path(cfg.bank_path).exists():
            raise ConfigError(f"template bank {cfg.bank_path} does not exist; run build-bank first")
        bank = load_bank(cfg.bank_path)
    keys = [(i, t) for i in range(len(cfg.snr_grid)) for t in range(cfg.trials)]
    n = resolve_workers(workers)
    if n == 1:
        outcomes = [run_trial(cfg, bank, *k) for k in keys]
    else:
        with ProcessPoolExecutor(n, initializer=_init_worker, initargs=(cfg, bank)) as ex:
            outcomes = list(ex.map(_worker_task, keys, chunksize=max(1, len(keys) // (4 * n))))
    outcomes.sort(key=lambda o: (o.snr_index, o.trial))
    return outcomes


@dataclass
class BerRecord:
    detector: str
    snr_db: float
    trials: int
    bit_errors: int
    total_bits: int
    mean_final_ped: float
    local_calls_mean: float = 0.0
    local_calls_max: int = 0
    optimizer_evals: int = 0
    qaoa_inferences: int = 0
    digests: list[str] = field(default_factory=list, repr=False)

    @property
    def ber(self) -> float:
        return self.bit_errors / self.total_bits

    @property
    def plot_floor(self) -> float:
        return 1.0 / self.total_bits

    def csv_row(self) -> list[str]:
        return [
            self.detector, repr(float(self.snr_db)), str(self.trials), str(self.bit_errors),
            str(self.total_bits), repr(self.ber), repr(self.plot_floor),
            repr(float(self.mean_final_ped)), repr(float(self.local_calls_mean)),
        ]


def aggregate(cfg: SweepConfig, outcomes: list[TrialOutcome]) -> list[BerRecord]:
    bits_per_trial = cfg.nt * cfg.modulation.bits
    records = []
    for name in cfg.detectors:
        for i, snr in enumerate(cfg.snr_grid):
            sel = [o for o in outcomes if o.snr_index == i]
            res = [o.results[name] for o in sel]
            calls = [r.counters.local_calls if r.counters else 0 for r in res]
            records.append(BerRecord(
                detector=name,
                snr_db=snr,
                trials=len(res),
                bit_errors=sum(r.bit_errors for r in res),
                total_bits=len(res) * bits_per_trial,
                mean_final_ped=float(np.mean([r.final_metric for r in res])),
                local_calls_mean=float(np.mean(calls)),
                local_calls_max=int(max(calls)),
                optimizer_evals=sum(r.counters.optimizer_evals for r in res if r.counters),
                qaoa_inferences=sum(r.counters.qaoa_inferences for r in res if r.counters),
                digests=[o.digest for o in sel],
            ))
    return records


def run_sweep(cfg: SweepConfig, bank: TemplateBank | None = None, workers: int | None = None) -> list[BerRecord]:
    return aggregate(cfg, run_trials(cfg, bank, workers))


def records_to_csv(records: list[BerRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def write_csv(records: list[BerRecord], path) -> None:
    Path(path).write_bytes(records_to_csv(records).encode("utf-8"))


@dataclass
class Summary:
    mean_ber: dict[str, float]
    per_snr: dict[str, dict[float, float]]

    def compare(self, a: str, b: str) -> list[tuple[float, float, float]]:
        """(snr, ber_a, ber_b) for every grid point."""
        return [(s, self.per_snr[a][s], self.per_snr[b][s]) for s in sorted(self.per_snr[a])]

    def format(self) -> str:
        names = list(self.mean_ber)
        grid = sorted(next(iter(self.per_snr.values())))
        lines = ["snr_db  " + "  ".join(f"{n:>13s}" for n in names)]
        for s in grid:
            lines.append(f"{s:6g}  " + "  ".join(f"{self.per_snr[n][s]:13.4e}" for n in names))
        lines.append("mean    " + "  ".join(f"{self.mean_ber[n]:13.4e}" for n in names))
        return "\n".join(lines)


def summarize(records: list[BerRecord]) -> Summary:
    """Unweighted mean BER across the SNR grid for each detector."""
    per: dict[str, dict[float, float]] = {}
    for r in records:
        per.setdefault(r.detector, {})[r.snr_db] = r.ber
    if not per:
        raise ValueError("no records to summarize")
    grid = set().union(*(set(v) for v in per.values()))
    for name, pts in per.items():
        missing = grid - set(pts)
        if missing:
            raise ValueError(f"{name} is missing SNR points {sorted(missing)}")
    return Summary({n: float(np.mean(list(v.values()))) for n, v in per.items()}, per)


def build_bank_from_config(cfg: SweepConfig, seed: int | None = None, workers: int | None = None) -> TemplateBank:
    seed = cfg.master_seed if seed is None else seed
    n = resolve_workers(workers)
    if n == 1:
        return build_bank(cfg.bank_config(), seed)
    with ProcessPoolExecutor(n) as ex:
        return build_bank(cfg.bank_config(), seed, map_fn=ex.map)
