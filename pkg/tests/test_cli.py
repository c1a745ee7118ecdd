import csv
import json
import subprocess
import sys

import pytest

from fcal.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert run("gen-data", "--noise", "hetero", "--n", 400, "--seed", 7, "--out", d) == 0
    return d


@pytest.fixture(scope="module")
def nll_run(tmp_path_factory, data):
    out = tmp_path_factory.mktemp("nll")
    assert run("train", "--data", data, "--loss", "nll", "--lambda", 0, "--epochs", 4, "--out", out) == 0
    return out


class TestGenData:
    def test_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert run("gen-data", "--noise", "hetero", "--n", 5000, "--seed", 7, "--out", tmp_path / name) == 0
        for f in ("samples.csv", "manifest.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_split_sizes(self, tmp_path):
        run("gen-data", "--n", 5000, "--out", tmp_path)
        counts = {}
        for r in rows(tmp_path / "samples.csv"):
            counts[r["split"]] = counts.get(r["split"], 0) + 1
        assert counts == {"train": 3000, "val": 1000, "test": 1000}

    def test_gamma_zero_names_flag(self, tmp_path, capsys):
        assert run("gen-data", "--noise", "gamma", "--gamma", 0, "--out", tmp_path) == 2
        assert "--gamma" in capsys.readouterr().err

    def test_bad_choice_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("gen-data", "--noise", "pink", "--out", tmp_path)
        assert exc.value.code == 2

    def test_missing_out(self, capsys):
        assert run("gen-data") == 2
        assert "--out" in capsys.readouterr().err


class TestTrain:
    def test_outputs(self, nll_run):
        for f in ("checkpoint.json", "train_log.csv", "config.json"):
            assert (nll_run / f).exists()
        log = rows(nll_run / "train_log.csv")
        assert list(log[0]) == ["epoch", "emp_risk", "fcal_loss", "combined"]
        assert [int(r["epoch"]) for r in log] == list(range(5))

    def test_warm_start_contract(self, tmp_path, data, nll_run):
        assert run("train", "--data", data, "--loss", "fcal-kl", "--lambda", 0.2, "--epochs", 2,
                   "--init-from", nll_run / "checkpoint.json", "--out", tmp_path) == 0
        first_final = float(rows(nll_run / "train_log.csv")[-1]["emp_risk"])
        second_start = float(rows(tmp_path / "train_log.csv")[0]["emp_risk"])
        assert abs(second_start - first_final) <= 1e-9
        assert (tmp_path / "checkpoint.json").exists()

    @pytest.mark.parametrize("lam", ["1.5", "-0.1"])
    def test_lambda_range(self, tmp_path, data, lam):
        assert run("train", "--data", data, "--loss", "fcal-kl", "--lambda", lam, "--out", tmp_path) == 2

    def test_k_below_two_rejected_at_parse(self, tmp_path, data):
        with pytest.raises(SystemExit) as exc:
            run("train", "--data", data, "--K", 1, "--out", tmp_path)
        assert exc.value.code == 2

    def test_deterministic(self, tmp_path, data):
        for name in ("a", "b"):
            run("train", "--data", data, "--loss", "fcal-wass", "--lambda", 0.01, "--epochs", 2,
                "--seed", 3, "--out", tmp_path / name)
        for f in ("checkpoint.json", "train_log.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_config_echo_reproduces(self, tmp_path, data, nll_run):
        cfg = json.loads((nll_run / "config.json").read_text())
        assert "out" not in cfg and "config" not in cfg
        assert cfg["format_version"] == 1
        assert run("train", "--config", nll_run / "config.json", "--out", tmp_path) == 0
        assert (tmp_path / "checkpoint.json").read_bytes() == (nll_run / "checkpoint.json").read_bytes()

    def test_config_unknown_key(self, tmp_path, data):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"learning_rate": 1}))
        assert run("train", "--data", data, "--config", cfg, "--out", tmp_path) == 2

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_divergence_exits_one(self, tmp_path, data, capsys):
        code = run("train", "--data", data, "--lr", 1e30, "--clip-norm", 0, "--epochs", 3, "--out", tmp_path)
        assert code == 1
        assert "batch" in capsys.readouterr().err

    def test_missing_dataset(self, tmp_path):
        assert run("train", "--data", tmp_path / "nope", "--out", tmp_path) == 1


@pytest.fixture(scope="module")
def big(tmp_path_factory):
    d = tmp_path_factory.mktemp("big")
    run("gen-data", "--n", 5000, "--seed", 1, "--out", d)
    return d


class TestEval:
    def test_oracle_calibrated(self, tmp_path, big):
        assert run("eval", "--data", big, "--oracle", "--out", tmp_path) == 0
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["ece_z"] < 0.02
        assert rep["smooth_l1_gt"] == 0.0
        for f in ("reliability_z.csv", "reliability_q.csv"):
            assert (tmp_path / f).exists()

    def test_identical_bytes(self, tmp_path, data, nll_run):
        for name in ("a", "b"):
            run("eval", "--data", data, "--checkpoint", nll_run / "checkpoint.json", "--out", tmp_path / name)
        for f in ("report.json", "reliability_z.csv", "reliability_q.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_temperature_scaling_lowers_val_nll(self, tmp_path, data, nll_run):
        ck = nll_run / "checkpoint.json"
        run("eval", "--data", data, "--checkpoint", ck, "--out", tmp_path / "plain")
        run("eval", "--data", data, "--checkpoint", ck, "--temperature-scale", "--out", tmp_path / "ts")
        plain = json.loads((tmp_path / "plain" / "report.json").read_text())
        ts = json.loads((tmp_path / "ts" / "report.json").read_text())
        assert ts["val_nll"] <= plain["val_nll"]
        assert ts["temperature"] > 0

    def test_needs_one_source(self, tmp_path, data):
        assert run("eval", "--data", data, "--out", tmp_path) == 2

    def test_missing_checkpoint(self, tmp_path, data):
        assert run("eval", "--data", data, "--checkpoint", tmp_path / "none.json", "--out", tmp_path) == 1


FAST = ("--n", 300, "--pretrain-epochs", 2, "--epochs", 1)


class TestSweep:
    def test_lambda_grid(self, tmp_path):
        code = run("sweep", "--param", "lambda", "--values", "0,0.2,0.5,0.9", "--seeds", "0,1,2", *FAST,
                   "--out", tmp_path)
        assert code == 0
        body = rows(tmp_path / "sweep.csv")
        assert len(body) == 12
        assert {r["status"] for r in body} == {"ok"}
        summary = rows(tmp_path / "sweep_summary.csv")
        assert [r["setting"] for r in summary] == ["0", "0.2", "0.5", "0.9"]
        assert all(r["n_ok"] == "3" for r in summary)
        for s in (0, 1, 2):
            assert len(rows(tmp_path / f"seed_{s}" / "sweep.csv")) == 4

    def test_k_grid(self, tmp_path):
        assert run("sweep", "--param", "K", "--values", "8,32,64,128", "--seeds", "0", *FAST, "--out", tmp_path) == 0
        assert [r["setting"] for r in rows(tmp_path / "sweep.csv")] == ["8", "32", "64", "128"]

    def test_k_below_two(self, tmp_path):
        assert run("sweep", "--param", "K", "--values", "1,8", "--out", tmp_path) == 2

    def test_gamma_grid_has_pct_drop(self, tmp_path):
        assert run("sweep", "--param", "gamma", "--values", "1,200", "--seeds", "0", *FAST, "--out", tmp_path) == 0
        body = rows(tmp_path / "sweep.csv")
        assert all(r["pct_drop"] != "" for r in body)

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_failed_child_recorded(self, tmp_path):
        code = run("sweep", "--param", "lambda", "--values", "0,0.5", "--seeds", "0", "--lr", 1e30,
                   "--clip-norm", 0, *FAST[:4], "--epochs", 2, "--out", tmp_path)
        assert code == 1
        body = rows(tmp_path / "sweep.csv")
        assert [r["setting"] for r in body] == ["0", "0.5"]
        assert all(r["status"].startswith("failed: TrainingError") for r in body)

    def test_empty_grid(self, tmp_path):
        assert run("sweep", "--param", "lambda", "--values", "", "--out", tmp_path) == 2


def test_report_table(tmp_path, data, nll_run, capsys):
    run("eval", "--data", data, "--oracle", "--out", tmp_path / "oracle")
    capsys.readouterr()
    assert run("report", tmp_path / "oracle", "--out", tmp_path / "table.md") == 0
    out = capsys.readouterr().out
    assert "ECE(z)" in out and "| oracle |" in out
    assert (tmp_path / "table.md").read_text() == out


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fcal", "gen-data", "--n", "60", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "manifest.json").exists()
