"""CLI surface: subcommands, JSON reports, and exit codes."""
from __future__ import annotations

import json

import pytest

from halfsparse import models
from halfsparse.cli import _parse_synth, main

SBM = "sbm:n=60,k=2,pin=0.4,pout=0.05,f=8"


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out) if out else None


# ── Synth spec parsing ──────────────────────────────────────────────────


class TestParseSynth:
    def test_sbm_defaults_and_overrides(self):
        spec = _parse_synth("sbm:n=50,pin=0.3")
        assert spec["n"] == 50 and spec["pin"] == 0.3
        assert spec["k"] == 2  # default

    def test_star(self):
        spec = _parse_synth("star:n=9,f=4,mag=30000")
        assert spec == {"family": "star", "n": 9, "f": 4, "mag": 30000.0}

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="family"):
            _parse_synth("ring:n=5")

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="keys"):
            _parse_synth("sbm:n=5,volume=2")

    def test_malformed_item(self):
        with pytest.raises(ValueError):
            _parse_synth("sbm:n")


# ── Subcommands ─────────────────────────────────────────────────────────


class TestInfo:
    def test_reports_constants(self, capsys):
        code, report = _run(capsys, ["info"])
        assert code == 0
        assert report["half"]["max"] == 65504.0
        assert report["widths"] == {"half": 64, "half2": 128, "half4": 256, "half8": 512}
        assert "version" in report and "timestamp" in report


class TestBench:
    @pytest.mark.parametrize("kernel", ["spmmv", "spmmve", "sddmm"])
    def test_kernels_bit_exact(self, capsys, kernel):
        code, report = _run(capsys, ["bench", "--kernel", kernel, "--synth", SBM])
        assert code == 0
        assert report["bit_exact_vs_reference"] is True
        assert report["metrics"]["load_transactions"] > 0
        assert report["oracle"]["nan_count"] == 0

    def test_scaled_modes(self, capsys):
        code, report = _run(
            capsys,
            ["bench", "--kernel", "spmmv", "--synth", SBM,
             "--mode", "discretized", "--norm", "both", "--width", "half8"],
        )
        assert code == 0
        assert report["config"]["mode"] == "discretized"
        assert report["metrics"]["coalesced_bytes_per_warp_load"] == 512

    def test_float32_precision(self, capsys):
        code, report = _run(
            capsys,
            ["bench", "--kernel", "spmmv", "--synth", SBM, "--precision", "float32"],
        )
        assert code == 0
        assert report["oracle"]["max_rel_err"] < 1e-5

    def test_star_hub_overflow_visible(self, capsys):
        code, report = _run(
            capsys,
            ["bench", "--kernel", "spmmv", "--synth", "star:n=9,f=4,mag=30000",
             "--mode", "post", "--norm", "right"],
        )
        assert code == 0  # reference agrees, INF and all
        assert report["oracle"]["inf_count"] == 4

    def test_deterministic_modulo_timestamp(self, capsys):
        _, a = _run(capsys, ["bench", "--kernel", "spmmv", "--synth", SBM])
        _, b = _run(capsys, ["bench", "--kernel", "spmmv", "--synth", SBM])
        a.pop("timestamp"), b.pop("timestamp")
        assert a == b


class TestCompare:
    def test_write_modes_agree(self, capsys):
        code, report = _run(capsys, ["compare", "--synth", SBM])
        assert code == 0
        assert report["outputs_bit_equal"] is True
        assert report["staging"]["staging_writes"] >= 0
        assert report["staging"]["atomic_writes"] == 0
        assert report["atomic_model"]["staging_writes"] == 0


class TestTrain:
    def test_half_runs_with_float32_companion(self, capsys, tmp_path):
        code, report = _run(
            capsys,
            ["train", "--synth", SBM, "--epochs", "3", "--out", str(tmp_path)],
        )
        assert code == 0
        assert report["half"]["conversions"] == {"forward": 3, "backward": 3}
        assert report["float32"]["conversions"] == {"forward": 0, "backward": 0}
        assert "train_acc_delta" in report
        assert (tmp_path / "gcn_half_trace.csv").exists()
        assert (tmp_path / "gcn_float32_trace.csv").exists()

    def test_epochs_zero(self, capsys, tmp_path):
        code, report = _run(
            capsys,
            ["train", "--synth", SBM, "--epochs", "0", "--out", str(tmp_path)],
        )
        assert code == 0
        assert report["half"]["final_loss"] is None
        assert 0.0 <= report["half"]["val_acc"] <= 1.0

    def test_nan_abort_reported(self, capsys, tmp_path, monkeypatch):
        counters = models.OverflowCounters()
        counters.observe("layer0", __import__("numpy").array([float("inf")]))

        def blow_up(*a, **kw):
            raise models.NanLossError(2, counters)

        monkeypatch.setattr("halfsparse.cli.models.train", blow_up)
        code, report = _run(
            capsys,
            ["train", "--synth", SBM, "--epochs", "3", "--out", str(tmp_path)],
        )
        assert code == 1
        assert report["nan_abort"] == {"epoch": 2, "inf_count": 1, "nan_count": 0}


# ── Exit codes ──────────────────────────────────────────────────────────


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--kernel", "spmmv", "--synth", SBM, "--turbo"])
        assert exc.value.code == 2

    def test_missing_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_bad_synth_is_config_error(self, capsys):
        assert main(["bench", "--kernel", "spmmv", "--synth", "ring:n=5"]) == 2

    def test_graph_and_synth_conflict(self, capsys, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0 1\n")
        assert main(["bench", "--kernel", "spmmv", "--graph", str(p), "--synth", SBM]) == 2

    def test_neither_graph_nor_synth(self, capsys):
        assert main(["bench", "--kernel", "spmmv"]) == 2

    def test_train_needs_labels(self, capsys, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0 1\n1 0\n")
        assert main(["train", "--graph", str(p), "--epochs", "1"]) == 2

    def test_missing_graph_file_is_io_error(self, capsys):
        assert main(["bench", "--kernel", "spmmv", "--graph", "/nonexistent/g.txt"]) == 3

    def test_graph_input_works(self, capsys, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0 1\n1 2\n2 0\n1 0\n2 1\n0 2\n")
        code, report = _run(
            capsys,
            ["bench", "--kernel", "spmmv", "--graph", str(p), "--feature-dim", "4"],
        )
        assert code == 0
        assert report["config"]["vertices"] == 3
