import json
import logging
import textwrap

import numpy as np
import pytest

import parboost
from parboost import harness
from parboost.cli import main
from parboost.errors import DataError, ParameterError
from parboost.harness import (
    METRIC_COLUMNS,
    ExperimentConfig,
    input_hash,
    load_csv,
    run_experiment,
    tradeoff_grid,
)


def write(path, text):
    path.write_text(textwrap.dedent(text).lstrip())
    return path


BOOST_INI = """
[experiment]
mode = boost
seed = 3
out = {out}
parallelism = {par}

[engine]
gamma = 0.1
p = 6
R = 2
t = 4
n = 40

[dataset]
generator = planted
m = 50
class_size = 12
voters = 3
gamma_star = 0.2
"""


def boost_config(tmp_path, par=1, sub="out"):
    return ExperimentConfig.from_ini(BOOST_INI.format(out=tmp_path / sub, par=par))


class TestLoadCsv:
    def test_three_rows(self, tmp_path):
        f = write(tmp_path / "d.csv", "x,y,label\n1,2,-1\n3,4,-1\n5,6,1\n")
        s = load_csv(f)
        assert s.m == 3
        assert s.labels.tolist() == [-1, -1, 1]
        assert s.points.tolist() == [[1, 2], [3, 4], [5, 6]]

    def test_zero_one_labels(self, tmp_path, caplog):
        f = write(tmp_path / "d.csv", "label,x\n0,1\n1,2\n")
        with caplog.at_level(logging.WARNING):
            s = load_csv(f)
        assert s.labels.tolist() == [-1, 1]
        assert "mapped" in caplog.text

    def test_bad_cell_cites_line(self, tmp_path):
        f = write(tmp_path / "d.csv", "x,label\n1,1\n2,1\n3,-1\nabc,1\n")
        with pytest.raises(DataError, match="line 5"):
            load_csv(f)

    def test_ragged_row(self, tmp_path):
        f = write(tmp_path / "d.csv", "x,label\n1,1\n2\n")
        with pytest.raises(DataError, match="line 3"):
            load_csv(f)

    @pytest.mark.parametrize("text", ["", "x,label\n", "x,y\n1,2\n", "x,label\n1,2\n"])
    def test_rejected(self, tmp_path, text):
        f = tmp_path / "d.csv"
        f.write_text(text)
        with pytest.raises(DataError):
            load_csv(f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv")


class TestConfig:
    def test_seed_mandatory(self):
        with pytest.raises(ParameterError, match="seed"):
            ExperimentConfig.from_ini("[experiment]\nmode = verify\n")

    def test_mode_checked(self):
        with pytest.raises(ParameterError):
            ExperimentConfig.from_ini("[experiment]\nmode = dance\nseed = 1\n")

    def test_missing_dataset_file(self, tmp_path):
        text = "[experiment]\nmode = boost\nseed = 1\n[dataset]\npath = missing.csv\n"
        with pytest.raises(ParameterError):
            ExperimentConfig.from_ini(text, base_dir=tmp_path)

    def test_unknown_section(self):
        with pytest.raises(ParameterError):
            ExperimentConfig.from_ini("[experiment]\nmode = verify\nseed = 1\n[extra]\na = 1\n")

    def test_overrides(self, tmp_path):
        cfg = ExperimentConfig.from_ini(
            BOOST_INI.format(out=tmp_path, par=1), overrides={"experiment.seed": 9, "engine.p": "2"}
        )
        assert cfg.seed == 9 and cfg.engine["p"] == "2"
        assert cfg.echo()["engine"]["p"] == "2"

    def test_planted_concentration_is_forwarded(self, tmp_path):
        text = BOOST_INI.format(out=tmp_path, par=1)
        base = harness.build_dataset(ExperimentConfig.from_ini(text))[0]
        spread = harness.build_dataset(
            ExperimentConfig.from_ini(text, overrides={"dataset.concentration": "50"})
        )[0]
        assert not np.array_equal(base.labels, spread.labels)


class TestRuns:
    def test_verify(self, tmp_path):
        cfg = ExperimentConfig.from_ini(f"[experiment]\nmode = verify\nseed = 0\nout = {tmp_path}\n")
        rec = run_experiment(cfg)
        assert rec.ok, rec.verdicts
        line = json.loads((tmp_path / "records.jsonl").read_text().splitlines()[-1])
        assert line["schema_version"] == 1 and line["ok"] is True

    def test_oracle(self, tmp_path):
        cfg = ExperimentConfig.from_ini(
            f"[experiment]\nmode = oracle\nseed = 0\nout = {tmp_path}\n[oracle]\nn = 3\nbeta = 0.1\n"
        )
        assert run_experiment(cfg).metrics["value"] == 0.352

    def test_boost_writes_metrics(self, tmp_path):
        rec = run_experiment(boost_config(tmp_path))
        assert rec.ok, (rec.error, rec.verdicts)
        assert rec.weak_calls == 6 * 4
        lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
        assert lines[0] == ",".join(METRIC_COLUMNS)
        assert len(lines) == 1 + 12
        assert set(rec.phase_seconds) >= {"bagging", "boosting", "total"}

    def test_adaboost_baseline(self, tmp_path):
        text = BOOST_INI.format(out=tmp_path, par=1).replace("mode = boost", "mode = adaboost-baseline")
        text = text.replace("m = 50", "m = 10")
        rec = run_experiment(ExperimentConfig.from_ini(text))
        assert rec.ok, (rec.error, rec.verdicts)
        assert rec.metrics["adaboost_max_deviation"] <= 1e-12

    def test_failure_is_recorded(self, tmp_path):
        cfg = boost_config(tmp_path)
        cfg.engine["max_weak_calls"] = "5"
        rec = run_experiment(cfg)
        assert not rec.complete and not rec.ok
        assert "ResourceError" in rec.error
        line = json.loads((tmp_path / "out" / "records.jsonl").read_text())
        assert line["complete"] is False

    def test_adversary_mode(self, tmp_path):
        text = f"""
        [experiment]
        mode = adversary
        seed = 1
        out = {tmp_path}

        [adversary]
        m = 40
        d = 1
        gamma = 0.1
        t = 2
        p_values = 1 2
        R_values = 1
        trials = 60
        """
        rec = run_experiment(ExperimentConfig.from_ini(textwrap.dedent(text)))
        assert rec.complete, rec.error
        assert len(rec.metrics["rows"]) == 2 * 4
        assert (tmp_path / "adversary.csv").exists()
        assert rec.metrics["calibrated_c_l"] >= 1


class TestReproducibility:
    @pytest.mark.parametrize("par", [4, 16])
    def test_metrics_byte_identical(self, tmp_path, par):
        run_experiment(boost_config(tmp_path, 1, "a"))
        run_experiment(boost_config(tmp_path, par, "b"))
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()

    def test_hash_tracks_inputs(self, tmp_path, monkeypatch):
        data = tmp_path / "d.csv"
        data.write_text("x,label\n1,1\n2,-1\n")
        text = f"[experiment]\nmode = boost\nseed = 1\nout = {tmp_path}/o\n[dataset]\npath = {data}\n"
        cfg = ExperimentConfig.from_ini(text)
        h0 = input_hash(cfg, data.read_bytes())
        assert input_hash(ExperimentConfig.from_ini(text), data.read_bytes()) == h0
        moved = ExperimentConfig.from_ini(text.replace("/o\n", "/elsewhere\n"))
        assert input_hash(moved, data.read_bytes()) == h0
        assert input_hash(ExperimentConfig.from_ini(text.replace("seed = 1", "seed = 2")), data.read_bytes()) != h0
        assert input_hash(cfg, b"x,label\n1,1\n2,1\n") != h0
        monkeypatch.setattr(harness, "__version__", parboost.__version__ + "+dev")
        assert input_hash(cfg, data.read_bytes()) != h0


class TestGrid:
    def test_single_point(self, tmp_path):
        cfg = boost_config(tmp_path)
        cfg.grid.update(p_values="3", R_values="1", t_values="2")
        rows = tradeoff_grid(cfg, tmp_path / "grid.csv")
        assert len(rows) == 1 and rows[0]["status"] == "ok"
        assert len((tmp_path / "grid.csv").read_text().splitlines()) == 2

    def test_infeasible_points_recorded(self, tmp_path):
        cfg = boost_config(tmp_path)
        cfg.grid.update(rule="upper-bound", R_values="1 2", d="1", delta="0.1")
        rows = tradeoff_grid(cfg)
        assert [r["status"] for r in rows] == ["failed", "failed"]
        assert all("ResourceError" in r["error"] for r in rows)

    def test_mixed_grid_continues(self, tmp_path):
        cfg = boost_config(tmp_path, par=2)
        cfg.engine["max_weak_calls"] = "20"
        cfg.grid.update(p_values="2 11", R_values="1", t_values="2")
        rows = tradeoff_grid(cfg)
        assert [r["status"] for r in rows] == ["ok", "failed"]

    def test_with_adversary_column(self, tmp_path):
        cfg = boost_config(tmp_path)
        cfg.grid.update(p_values="2", R_values="1", t_values="1", adversary_trials="50")
        cfg.adversary.update(m="30", d="1", gamma="0.1")
        row = tradeoff_grid(cfg)[0]
        assert row["status"] == "ok"
        assert abs(row["adversary_loss"] - row["majority_exact"]) <= 3 * row["adversary_half_width"] + 1e-9


class TestCli:
    def test_oracle(self, capsys):
        assert main(["oracle", "--n", "3", "--beta", "0.1"]) == 0
        assert capsys.readouterr().out.strip() == "0.352"

    def test_verify(self, tmp_path, capsys):
        assert main(["verify", "--out", str(tmp_path)]) == 0
        assert json.loads(capsys.readouterr().out)["ok"] is True

    def test_run_and_flags(self, tmp_path):
        cfg = write(tmp_path / "c.ini", BOOST_INI.format(out=tmp_path / "x", par=1))
        assert main(["run", str(cfg), "--out", str(tmp_path / "y"), "--seed", "4", "--parallelism", "2"]) == 0
        rec = json.loads((tmp_path / "y" / "records.jsonl").read_text())
        assert rec["config"]["seed"] == 4 and rec["config"]["parallelism"] == 2

    def test_failing_run_exit_code(self, tmp_path):
        cfg = write(tmp_path / "c.ini", BOOST_INI.format(out=tmp_path / "x", par=1))
        assert main(["run", str(cfg), "--set", "engine.max_weak_calls=1"]) == 1

    def test_grid(self, tmp_path):
        cfg = write(tmp_path / "c.ini", BOOST_INI.format(out=tmp_path / "g", par=1) + "\n[grid]\np_values = 2\nt_values = 2\n")
        assert main(["grid", str(cfg)]) == 0
        assert (tmp_path / "g" / "grid.csv").exists()

    def test_bad_config(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "missing.ini")]) == 2

    def test_log_level_from_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv("BOOST_LOG", "debug")
        assert main(["verify", "--out", str(tmp_path)]) == 0
