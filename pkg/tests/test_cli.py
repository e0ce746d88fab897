import json

import numpy as np
import pytest

from ulight import gmm
from ulight.cli import main
from ulight.formats import load_checkpoint, read_dataset, save_checkpoint
from ulight.gmm import GaussianMixture
from ulight.plan import PlanModel, conditional
from ulight.solver import SolverConfig, init_plan


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def data(tmp_path, capsys):
    code, _, _ = run(capsys, "generate", "--scenario", "gauss_mix", "--n", 400, "--seed", 1,
                     "--out", tmp_path / "data")
    assert code == 0
    return tmp_path / "data"


class TestGenerate:
    def test_files(self, data):
        xs = read_dataset(data / "source.csv")
        assert xs.shape == (400, 2)
        assert (data / "target.csv").read_text().startswith("x0,x1\n")

    def test_single_row(self, tmp_path, capsys):
        run(capsys, "generate", "--n", 1, "--out", tmp_path)
        assert read_dataset(tmp_path / "source.csv").shape == (1, 2)

    def test_deterministic(self, tmp_path, capsys):
        for name in ("a", "b"):
            run(capsys, "generate", "--n", 50, "--seed", 9, "--out", tmp_path / name)
        for f in ("source.csv", "target.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_bad_n(self, tmp_path, capsys):
        assert run(capsys, "generate", "--n", 0, "--out", tmp_path)[0] == 2


class TestTrain:
    def test_zero_steps_is_init(self, data, tmp_path, capsys):
        ckpt = tmp_path / "c.json"
        code, out, _ = run(capsys, "train", "--source", data / "source.csv", "--target", data / "target.csv",
                           "--steps", 0, "--seed", 4, "--out", ckpt)
        assert code == 0
        report = json.loads(out)
        assert np.isfinite(report["final_objective"]) and "elapsed_seconds" in report
        plan, raw = load_checkpoint(ckpt)
        cfg = SolverConfig(seed=4)
        expected = init_plan(cfg, read_dataset(data / "source.csv"), read_dataset(data / "target.csv"),
                             np.random.default_rng(4))
        assert plan == expected and raw["steps_trained"] == 0

    def test_progress_and_config_precedence(self, data, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epsilon": 0.5, "steps": 7, "div": "balanced"}))
        ckpt = tmp_path / "c.json"
        code, _, _ = run(capsys, "train", "--source", data / "source.csv", "--target", data / "target.csv",
                         "--config", cfg, "--steps", 3, "--out", ckpt)
        assert code == 0
        plan, raw = load_checkpoint(ckpt)
        assert plan.epsilon == 0.5 and plan.div1.kind == "balanced" and raw["steps_trained"] == 3
        lines = (tmp_path / "c.progress.csv").read_text().splitlines()
        assert len(lines) == 3 and lines[0].startswith("0,")

    def test_missing_file(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        code, _, err = run(capsys, "train", "--source", missing, "--target", missing, "--out", tmp_path / "c.json")
        assert code == 2 and str(missing) in err

    def test_bad_tau(self, data, tmp_path, capsys):
        code, _, _ = run(capsys, "train", "--source", data / "source.csv", "--target", data / "target.csv",
                         "--tau1", -1, "--out", tmp_path / "c.json")
        assert code == 2

    def test_overflow_exit_code(self, tmp_path, capsys):
        np.savetxt(tmp_path / "s.csv", np.array([[0.0], [60.0]]), header="x0", comments="", delimiter=",")
        code, _, err = run(capsys, "train", "--source", tmp_path / "s.csv", "--target", tmp_path / "s.csv",
                           "--tau1", 0.01, "--tau2", 0.01, "--epsilon", 1, "--steps", 2,
                           "--out", tmp_path / "c.json")
        assert code == 1 and "step" in err


def tiny_checkpoint(path, r=(1.0, -1.0), s=(0.5, 2.0)):
    v = GaussianMixture([0.0], [list(r)], [np.log(s).tolist()])
    u = GaussianMixture([0.0], [[0.0, 0.0]], [[0.0, 0.0]])
    save_checkpoint(path, PlanModel(1e-8, v, u))


class TestSample:
    def test_conditional_rows(self, data, tmp_path, capsys):
        tiny_checkpoint(tmp_path / "c.json")
        code, _, _ = run(capsys, "sample", "--checkpoint", tmp_path / "c.json", "--source", data / "source.csv",
                         "--out", tmp_path / "s.csv")
        assert code == 0
        rows = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
        x, y = rows[:, :2], rows[:, 2:]
        np.testing.assert_allclose(y, np.array([1.0, -1.0]) + np.array([0.5, 2.0]) * x, atol=1e-3)
        assert (tmp_path / "s.csv").read_text().startswith("x0,x1,y0,y1\n")

    def test_conditional_matches_library(self, data, tmp_path, capsys):
        run(capsys, "train", "--source", data / "source.csv", "--target", data / "target.csv",
            "--steps", 20, "--out", tmp_path / "c.json")
        plan, _ = load_checkpoint(tmp_path / "c.json")
        run(capsys, "sample", "--checkpoint", tmp_path / "c.json", "--source", data / "source.csv",
            "--n", 5, "--seed", 2, "--out", tmp_path / "s.csv")
        rows = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
        assert rows.shape == (5, 4)
        c = conditional(plan, rows[0, :2])
        assert np.exp(c.log_weights_normalized).sum() == pytest.approx(1.0)

    def test_marginal(self, tmp_path, capsys):
        v = GaussianMixture([0.0], [[0.0]], [[0.0]])
        u = GaussianMixture(np.log([0.5, 0.5]), [[-0.4], [0.4]], [[0.0], [0.0]])
        save_checkpoint(tmp_path / "c.json", PlanModel(1.0, v, u))
        code, out, _ = run(capsys, "sample", "--checkpoint", tmp_path / "c.json", "--marginal", "--n", 4000,
                           "--out", tmp_path / "m.csv")
        assert code == 0 and json.loads(out)["total_mass"] == pytest.approx(1.0)
        draws = read_dataset(tmp_path / "m.csv")
        sd = np.sqrt(1.0 + 0.16)
        assert abs(draws.mean()) <= 4 * sd / np.sqrt(4000)

    def test_dimension_mismatch(self, tmp_path, capsys):
        tiny_checkpoint(tmp_path / "c.json")
        np.savetxt(tmp_path / "x.csv", np.zeros((3, 1)), header="x0", comments="")
        code, _, _ = run(capsys, "sample", "--checkpoint", tmp_path / "c.json", "--source", tmp_path / "x.csv",
                         "--out", tmp_path / "s.csv")
        assert code == 2


class TestEvaluate:
    def test_report(self, data, tmp_path, capsys):
        run(capsys, "train", "--source", data / "source.csv", "--target", data / "target.csv",
            "--steps", 10, "--out", tmp_path / "c.json")
        code, _, _ = run(capsys, "evaluate", "--checkpoint", tmp_path / "c.json", "--source", data / "source.csv",
                         "--target", data / "target.csv", "--scenario", "gauss_mix", "--w2-size", 128,
                         "--out", tmp_path / "r.json")
        assert code == 0
        report = json.loads((tmp_path / "r.json").read_text())
        plan, _ = load_checkpoint(tmp_path / "c.json")
        assert report["learned_mass"] == pytest.approx(gmm.total_mass(plan.u), rel=1e-15)
        assert np.shape(report["mode_matrix"]) == (2, 2)
        assert report["ot_cost"] >= 0 and report["w2"] >= 0 and report["steps_trained"] == 10

    def test_corrupt_checkpoint(self, data, tmp_path, capsys):
        (tmp_path / "c.json").write_text("{not json")
        code, _, _ = run(capsys, "evaluate", "--checkpoint", tmp_path / "c.json", "--source", data / "source.csv",
                         "--target", data / "target.csv", "--out", tmp_path / "r.json")
        assert code == 2


class TestOracle:
    def test_duality_gap(self, tmp_path, capsys):
        code, out, _ = run(capsys, "oracle", "duality-gap", "--grid-points", 128, "--out", tmp_path / "g.json")
        report = json.loads(out)
        assert code == 0 and report["pass"] and report["gap"] <= 1e-4
        assert json.loads((tmp_path / "g.json").read_text())["gap"] == report["gap"]

    def test_balanced_sinkhorn(self, capsys):
        code, out, _ = run(capsys, "oracle", "sinkhorn", "--div", "balanced", "--grid-points", 128, "--tol", 1e-10)
        assert code == 0 and json.loads(out)["pass"]

    def test_bound_check(self, capsys):
        code, out, _ = run(capsys, "oracle", "bound-check", "--grid-points", 64, "--draws", 5)
        report = json.loads(out)
        assert code == 0 and report["satisfied"] == 5

    def test_non_convergence(self, capsys):
        code, out, _ = run(capsys, "oracle", "sinkhorn", "--max-iter", 2)
        assert code == 1 and json.loads(out)["residual"] > 0
