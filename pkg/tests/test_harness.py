import csv

import numpy as np
import pytest

from oracles import strongly_connected
from worldlens.extraction import Estimate
from worldlens.harness import cli
from worldlens.harness.config import ConfigError, ExperimentConfig, WorldSource, parse_config, parse_param, parse_triple
from worldlens.harness.figure4 import figure4, figure4_csv
from worldlens.harness.runs import check_preconditions, resolve_triples, run_sweep
from worldlens.extraction import ExtractionMethod, PreconditionError
from worldlens.worldfile import load_world, random_world


@pytest.fixture(autouse=True)
def single_process(monkeypatch):
    monkeypatch.setenv("WORLDLENS_THREADS", "1")


# ---------------------------------------------------------------- config


def test_parse_config_grid():
    cfg = parse_config(
        """
        world = builtin:chain   # the default world
        param = p_L=0.4
        vary = p_R
        p = 0.35
        p = 0.6
        method = t2
        n = 25
        n = 50
        delta = 0.2
        agent = adversarial
        """
    )
    assert cfg.world == WorldSource("builtin", "chain", (("p_L", 0.4),))
    assert cfg.p_grid == (0.35, 0.6) and cfg.n_grid == (25, 50)
    assert cfg.method is ExtractionMethod.T2_STOCH and cfg.agent == "adversarial"


@pytest.mark.parametrize(
    "text",
    [
        "colour = red",
        "n = 5\nn = x",
        "method = t9",
        "agent = lazy",
        "agent = optimal\nagent = random",
        "world = moon:1",
        "world = random:1:2",
        "vary = p_R",
        "n = 0",
        "just words",
    ],
)
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_params_and_triples():
    assert parse_param("p_R=0.3") == ("p_R", 0.3)
    assert parse_triple("s0, R ,s1") == ("s0", "R", "s1")
    for bad in ("p_R", "p_R=x"):
        with pytest.raises(ConfigError):
            parse_param(bad)
    with pytest.raises(ConfigError):
        parse_triple("s0,R")


def test_triples_resolve():
    cfg = ExperimentConfig()
    assert resolve_triples(cfg, cfg.world.build()) == [(2, 1, 3)]
    cfg = ExperimentConfig(world=WorldSource("random", seed=1, sizes=(3, 2)))
    assert len(resolve_triples(cfg, cfg.world.build())) == 18


def test_preconditions():
    with pytest.raises(PreconditionError):
        check_preconditions(ExtractionMethod.T2_STOCH, 0.5, "adversarial")
    with pytest.raises(PreconditionError):
        check_preconditions(ExtractionMethod.T4_WIDTH2_DET, 0.1, "optimal")
    check_preconditions(ExtractionMethod.T1_DET, 0.6, "adversarial")


# ---------------------------------------------------------------- random worlds


def test_random_worlds_are_communicating():
    for seed in range(100):
        w = random_world(seed, 2 + seed % 7, 1 + seed % 3)
        adj = w.kernel.sum(axis=1) > 0
        assert strongly_connected(adj)
        np.testing.assert_allclose(w.kernel.sum(axis=2), 1.0, atol=1e-12)


def test_gen_world_files_validate(tmp_path, capsys):
    for seed in range(100):
        path = tmp_path / f"w{seed}.txt"
        assert cli.main(["gen-world", "--seed", str(seed), "--states", "6", "--actions", "2", "--out", str(path)]) == 0
        w = load_world(path)
        assert strongly_connected(w.kernel.sum(axis=1) > 0)
        np.testing.assert_array_equal(w.kernel, random_world(seed, 6, 2).kernel)
    assert cli.main(["validate", "--random", "7:6:2"]) == 0


# ---------------------------------------------------------------- command line


def test_validate_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", "--builtin", "chain"]) == 0
    assert cli.main(["validate", "--builtin", "chain", "--param", "p_R=0"]) == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("states 2\nactions 1\nt 0 0 1 1.5\n")
    assert cli.main(["validate", "--world", str(bad)]) == 1
    assert "line 3" in capsys.readouterr().out


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["extract", "--bogus"])
    assert exc.value.code == 1
    assert cli.main(["validate"]) == 1
    assert cli.main(["extract", "--builtin", "moon"]) == 1


def test_refusals_exit_2(tmp_path):
    assert cli.main(["extract", "--builtin", "chain", "--method", "t2", "--delta", "0.5", "--n", "20"]) == 2
    assert cli.main(["extract", "--builtin", "chain", "--method", "t4d", "--delta", "0.5", "--n", "20"]) == 2
    assert cli.main(["extract", "--builtin", "chain", "--method", "t4", "--delta", "0.1", "--n", "20"]) == 2
    assert cli.main(["figure4", "--delta", "0.5", "--out", str(tmp_path / "f.csv")]) == 2


def test_bound_violation_exit_3(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(Estimate, "bound_at", lambda self, p: -1.0)
    out = tmp_path / "x.csv"
    code = cli.main(["extract", "--builtin", "chain", "--method", "t2", "--delta", "0.2", "--n", "20", "--out", str(out)])
    assert code == 3
    dump = (tmp_path / "x.csv.violations.txt").read_text()
    assert dump.startswith("# violation:") and "XI_K" in dump
    assert not out.exists()


def test_extract_writes_csv(tmp_path):
    out = tmp_path / "e.csv"
    args = ["extract", "--builtin", "chain", "--method", "t2", "--delta", "0.1", "--n", "100",
            "--agent", "adversarial", "--triple", "all", "--out", str(out)]
    assert cli.main(args) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 5 * 2 * 5
    assert all(r["bound_holds"] == "true" for r in rows)
    assert (tmp_path / "e.svg").exists() and (tmp_path / "e.png").exists()


def sweep(tmp_path, name):
    out = tmp_path / name
    args = ["sweep", "--builtin", "chain", "--method", "t2", "--vary", "p_R", "--p", "0.35", "--p", "0.6",
            "--n", "25", "--n", "50", "--delta", "0.2", "--agent", "random", "--seed", "0", "--seed", "1",
            "--out", str(out)]
    assert cli.main(args) == 0
    return out


def test_sweep_outputs_are_deterministic(tmp_path):
    a, b = sweep(tmp_path, "a.csv"), sweep(tmp_path, "b.csv")
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".svg").read_bytes() == b.with_suffix(".svg").read_bytes()
    assert a.with_suffix(".png").read_bytes() == b.with_suffix(".png").read_bytes()
    text = a.read_text()
    body = [line for line in text.splitlines() if not line.startswith("#")]
    assert len(body) == 1 + 2 * 2 * 2
    footer = [line for line in text.splitlines() if line.startswith("# slope,")]
    assert any("metric=worst_case_error" in line for line in footer)
    assert (tmp_path / "a.csv.timing.csv").exists()


def test_sweep_parallel_matches_serial(tmp_path, monkeypatch):
    cfg = parse_config("method = t2\nn = 20\nn = 40\ndelta = 0.2\nagent = random\nseed = 0\nseed = 1\nseed = 2")
    serial, _ = run_sweep(cfg)
    monkeypatch.setenv("WORLDLENS_THREADS", "3")
    parallel, _ = run_sweep(cfg)
    assert serial == parallel


def test_figure4_command(tmp_path, capsys):
    out = tmp_path / "f4.csv"
    assert cli.main(["figure4", "--out", str(out)]) == 0
    text = out.read_text()
    assert "# forced_boundary=5.5" in text
    assert "epsilon=0.125" in capsys.readouterr().out
    assert (tmp_path / "f4.svg").exists()


def test_figure4_structure():
    fig = figure4(draws=50)
    assert fig.epsilon == pytest.approx(0.125)
    assert fig.boundary == 5.5
    assert min(fig.forced_a) == 8
    assert set(fig.crossover_counts) <= {5, 6, 7}
    assert figure4_csv(fig) == figure4_csv(figure4(draws=50))
