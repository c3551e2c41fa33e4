"""Command-line entry point: ``sweep``, ``build-bank`` and ``oracle``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from importlib import resources

from .harness import (
    ConfigError,
    SweepConfig,
    build_bank_from_config,
    load_config,
    parse_snr_range,
    run_sweep,
    summarize,
    write_csv,
)
from .transfer import BankError, save_bank


def _load(path: str | None) -> SweepConfig:
    if path is None or path == "table1":
        with resources.as_file(resources.files("bqamd") / "presets" / "table1.toml") as p:
            return load_config(p)
    return load_config(path)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bqamd", description="Blockwise QAOA-aware MIMO detection benchmarks")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sw = sub.add_parser("sweep", help="run a BER sweep and write CSV")
    sw.add_argument("--config", help="TOML config (default: built-in table1 preset)")
    sw.add_argument("--out", help="CSV output path")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--detectors", help="comma-separated detector ids")
    sw.add_argument("--snr", help="SNR grid as a:step:b (dB)")
    sw.add_argument("--trials", type=int)
    sw.add_argument("--bank", help="template bank JSON for the transfer detector")
    sw.add_argument("--workers", type=int)

    bb = sub.add_parser("build-bank", help="train the offline template bank")
    bb.add_argument("--config")
    bb.add_argument("--out", required=True)
    bb.add_argument("--seed", type=int)
    bb.add_argument("--workers", type=int)

    sub.add_parser("oracle", help="exhaustive desk-scale verification")
    return ap


def _apply_overrides(cfg: SweepConfig, args) -> SweepConfig:
    kw = {}
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if args.detectors:
        kw["detectors"] = tuple(d.strip() for d in args.detectors.split(",") if d.strip())
    if args.snr:
        kw["snr_grid"] = parse_snr_range(args.snr)
    if args.trials is not None:
        kw["trials"] = args.trials
    if args.bank:
        kw["bank_path"] = args.bank
    if args.out:
        kw["out_path"] = args.out
    cfg = replace(cfg, **kw)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "sweep":
            cfg = _apply_overrides(_load(args.config), args)
            if not cfg.out_path:
                raise ConfigError("no output path; pass --out")
            records = run_sweep(cfg, workers=args.workers)
            write_csv(records, cfg.out_path)
            print(summarize(records).format())
            return 0
        if args.cmd == "build-bank":
            cfg = _load(args.config)
            bank = build_bank_from_config(cfg, args.seed, args.workers)
            save_bank(bank, args.out)
            print(f"wrote {len(bank.entries)} SNR entries x {bank.k_temp} templates to {args.out}")
            return 0
        if args.cmd == "oracle":
            from .oracles import run_all

            results = run_all()
            for name, ok in results:
                print(f"{'PASS' if ok else 'FAIL'} {name}")
            return 0 if all(ok for _, ok in results) else 1
    except (ConfigError, BankError, ValueError, OSError) as exc:
        print(f"bqamd: error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
