from dataclasses import replace
from importlib import resources

import numpy as np
import pytest

from bqamd.cli import main
from bqamd.constellation import symbols_to_bits
from bqamd.harness import (
    CSV_HEADER,
    BerRecord,
    ConfigError,
    SweepConfig,
    config_from_dict,
    load_config,
    make_instance,
    parse_snr_range,
    records_to_csv,
    resolve_workers,
    run_sweep,
    run_trials,
    summarize,
)

from test_transfer import MINI


def small_cfg(**kw):
    base = dict(nt=4, nr=4, snr_grid=(4.0, 12.0), trials=3, master_seed=77,
                detectors=("mf", "mmse", "kbest", "bqa_exh_reg", "bqa_exh_unreg"))
    base.update(kw)
    return SweepConfig(**base)


def preset_path():
    return resources.files("bqamd") / "presets" / "table1.toml"


class TestConfig:
    def test_snr_range(self):
        assert parse_snr_range("0:2:30") == tuple(float(v) for v in range(0, 31, 2))
        assert parse_snr_range("5,7.5") == (5.0, 7.5)
        with pytest.raises(ConfigError):
            parse_snr_range("0:0:4")
        with pytest.raises(ConfigError):
            parse_snr_range("a:b:c")

    def test_table1_preset_verbatim(self):
        cfg = load_config(preset_path())
        d = cfg.detector
        assert (cfg.nt, cfg.nr, cfg.modulation.name) == (16, 16, "QAM16")
        assert cfg.snr_grid == tuple(float(v) for v in range(0, 31, 2))
        assert (d.b, d.p, d.n_shots, d.T, d.K) == (2, 4, 1024, 4, 4)
        assert d.schedule.as_list() == [0.005, 0.45, 13.0, 0.55]
        assert cfg.k_temp == 4 and cfg.trials == 100
        assert cfg.bank_config().depth == 4
        assert cfg.detector.b * cfg.modulation.bits == 8

    def test_table1_sweep_size(self):
        cfg = load_config(preset_path())
        assert len(cfg.snr_grid) * cfg.trials * cfg.nt * cfg.modulation.bits == 102_400

    def test_zero_trials_rejected(self):
        with pytest.raises(ConfigError):
            small_cfg(trials=0).validate()

    def test_unknown_detector_and_key(self):
        with pytest.raises(ConfigError):
            small_cfg(detectors=("sphere",)).validate()
        with pytest.raises(ConfigError):
            config_from_dict({"nt": 4, "colour": "red"})
        with pytest.raises(ConfigError):
            config_from_dict({"detector": {"depth": 4}})

    def test_workers_env(self, monkeypatch):
        monkeypatch.setenv("BQAMD_THREADS", "3")
        assert resolve_workers(None) == 3
        assert resolve_workers(2) == 2
        monkeypatch.delenv("BQAMD_THREADS")
        assert resolve_workers(None) >= 1


class TestSweep:
    def test_determinism_and_csv_bytes(self):
        a = records_to_csv(run_sweep(small_cfg(), workers=1))
        b = records_to_csv(run_sweep(small_cfg(), workers=1))
        assert a == b
        lines = a.split("\n")
        assert lines[0] == ",".join(CSV_HEADER)
        assert "\r" not in a and a.endswith("\n")
        assert len(lines) == 1 + 5 * 2 + 1

    def test_common_random_numbers(self):
        recs = run_sweep(small_cfg(), workers=1)
        by_snr = {}
        for r in recs:
            by_snr.setdefault(r.snr_db, []).append(r.digests)
        for digests in by_snr.values():
            assert all(d == digests[0] for d in digests)
        # changing the detector selection does not change the instances or baseline results
        other = run_sweep(small_cfg(detectors=("mmse",)), workers=1)
        mm = [r for r in recs if r.detector == "mmse"]
        assert [r.digests for r in other] == [r.digests for r in mm]
        assert [r.bit_errors for r in other] == [r.bit_errors for r in mm]

    def test_ber_accounting_audit(self):
        cfg = small_cfg(trials=10, snr_grid=(6.0,))
        outcomes = run_trials(cfg, workers=1)
        recs = {r.detector: r for r in run_sweep(cfg, workers=1)}
        for name in cfg.detectors:
            recount = 0
            for o in outcomes:
                inst = make_instance(cfg, o.snr_index, o.trial)
                np.testing.assert_array_equal(inst.tx_bits, o.tx_bits)
                recount += int(np.count_nonzero(symbols_to_bits(o.results[name].x_hat, cfg.modulation) != inst.tx_bits))
            assert recs[name].bit_errors == recount
            assert recs[name].total_bits == 10 * 16

    def test_parallel_matches_serial(self):
        cfg = small_cfg()
        assert records_to_csv(run_sweep(cfg, workers=1)) == records_to_csv(run_sweep(cfg, workers=2))

    def test_transfer_needs_bank(self, tmp_path):
        cfg = small_cfg(detectors=("bqa_transfer",), bank_path=str(tmp_path / "missing.json"))
        with pytest.raises(ConfigError):
            run_sweep(cfg, workers=1)

    def test_transfer_without_online_optimizer(self):
        cfg = small_cfg(modulation="QPSK", detectors=("bqa_transfer",), bank_path=str(MINI),
                        detector=replace(SweepConfig().detector, b=1, p=1))
        recs = run_sweep(cfg, workers=1)
        assert all(r.optimizer_evals == 0 and r.qaoa_inferences > 0 for r in recs)


class TestSummary:
    def rec(self, det, snr, err, total=64):
        return BerRecord(det, snr, 1, err, total, 0.0)

    def test_single_point(self):
        s = summarize([self.rec("a", 0.0, 8)])
        assert s.mean_ber["a"] == pytest.approx(8 / 64)

    def test_zero_errors_and_floor(self):
        r = self.rec("a", 0.0, 0)
        assert summarize([r]).mean_ber["a"] == 0.0
        assert r.plot_floor == pytest.approx(1 / 64)
        assert r.csv_row()[5] == "0.0"

    def test_incomplete_grid(self):
        with pytest.raises(ValueError):
            summarize([self.rec("a", 0.0, 1), self.rec("a", 2.0, 1), self.rec("b", 0.0, 1)])
        with pytest.raises(ValueError):
            summarize([])

    def test_mean_is_unweighted(self):
        s = summarize([self.rec("a", 0.0, 32), self.rec("a", 2.0, 0, total=6400)])
        assert s.mean_ber["a"] == pytest.approx(0.25)
        assert s.compare("a", "a")[0] == (0.0, 0.5, 0.5)
        assert "mean" in s.format()


TINY_TOML = """
nt = 2
nr = 2
modulation = "QPSK"
snr = "0:10:10"
trials = 2
master_seed = 5
detectors = ["mmse", "bqa_transfer"]

[detector]
b = 1
p = 1
T = 2
K = 2
shots = 64

[bank_build]
n_ref = 2
k_temp = 1
budget = 10
restarts = 0
"""


class TestCli:
    def test_unknown_flag(self, capsys):
        assert main(["sweep", "--bogus"]) != 0
        assert main([]) != 0

    def test_bad_config_path(self, tmp_path, capsys):
        code = main(["sweep", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "x.csv")])
        assert code != 0
        assert "error" in capsys.readouterr().err

    def test_missing_bank(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text(TINY_TOML)
        code = main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "x.csv"),
                     "--bank", str(tmp_path / "none.json"), "--workers", "1"])
        assert code != 0

    def test_build_bank_then_sweep(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text(TINY_TOML)
        bank = tmp_path / "bank.json"
        assert main(["build-bank", "--config", str(cfg), "--out", str(bank), "--workers", "1"]) == 0
        out = tmp_path / "ber.csv"
        assert main(["sweep", "--config", str(cfg), "--out", str(out), "--bank", str(bank),
                     "--workers", "1", "--seed", "9"]) == 0
        text = out.read_text()
        assert text.splitlines()[0] == ",".join(CSV_HEADER)
        assert len(text.splitlines()) == 1 + 2 * 2
        cfg_obj = replace(load_config(cfg), bank_path=str(bank), master_seed=9)
        recs = run_sweep(cfg_obj, workers=1)
        assert all(r.optimizer_evals == 0 for r in recs)
        assert records_to_csv(recs) == text

    def test_overrides(self, tmp_path, capsys):
        out = tmp_path / "o.csv"
        code = main(["sweep", "--detectors", "mf,mmse", "--snr", "10:10:20", "--trials", "2",
                     "--out", str(out), "--workers", "1"])
        assert code == 0
        rows = out.read_text().splitlines()
        assert len(rows) == 1 + 4
        assert rows[1].startswith("mf,10.0,2,")

    def test_oracle(self, capsys):
        assert main(["oracle"]) == 0
        assert capsys.readouterr().out.count("PASS") == 4
