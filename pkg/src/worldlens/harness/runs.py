"""Sweep and extraction runs: cells, agents, CSV rows and fitted slopes."""

from __future__ import annotations

import csv
import io
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..agents import DeltaConfig, FamilyAgent, Mode, ObservationAgent
from ..extraction import (
    Estimate,
    ExtractionMethod,
    KernelEstimate,
    PreconditionError,
    project_simplex,
    run_extraction,
)
from ..mdp import ObservableWorld, World
from ..worstcase import fitted_slope, identification_radius
from .config import STOCHASTIC_ONLY_DELTA, ExperimentConfig

DEFAULT_TRIPLES = {
    "chain": ("s0", "R", "s1"),
    "fail": ("s0", "R", "s1"),
    "three": ("s2", "b", "s3"),
}

SWEEP_COLUMNS = (
    "world", "s", "a", "s_next", "method", "n", "delta", "agent", "seed",
    "p_true", "p_hat", "abs_error", "bound_at_true", "bound_holds", "queries", "worst_case_error",
)
EXTRACT_COLUMNS = (
    "world", "s", "a", "s_next", "method", "n", "delta", "agent", "seed",
    "p_true", "p_hat", "p_normalized", "bound_reported", "bound_at_true", "abs_error", "bound_holds", "queries",
)


class BoundViolation(RuntimeError):
    def __init__(self, rows, dumps):
        super().__init__(f"{len(rows)} run(s) exceeded their error bound")
        self.rows = rows
        self.dumps = dumps


def base_of(world):
    return world.base if isinstance(world, ObservableWorld) else world


def as_observable(world) -> ObservableWorld:
    if isinstance(world, ObservableWorld):
        return world
    return ObservableWorld(world, np.eye(world.n_states), world.state_names)


def check_preconditions(method: ExtractionMethod, delta: float, agent: str) -> None:
    if method in STOCHASTIC_ONLY_DELTA and delta >= 0.5:
        raise PreconditionError(f"delta={delta} >= 1/2: {method.value} cannot give a guarantee")
    if not 0.0 <= delta < 1.0:
        raise PreconditionError(f"delta={delta} outside [0, 1)")
    if method is ExtractionMethod.T4_WIDTH2_DET and (delta != 0.0 or agent != "optimal"):
        raise PreconditionError("the exact width-two extractor needs an optimal agent with delta = 0")


def make_agent(world, method: ExtractionMethod, agent: str, delta: float, seed: int, s0: int | None = None):
    """Synthesized agent of the class the method's guarantee is stated for."""
    deterministic = method in (ExtractionMethod.T1_DET, ExtractionMethod.T4_WIDTH2_DET, ExtractionMethod.T4_WIDTH2_DELTA)
    cfg = DeltaConfig(delta, Mode(agent), seed, deterministic=deterministic)
    if method is ExtractionMethod.T3_POMDP:
        return ObservationAgent(as_observable(world), cfg)
    return FamilyAgent(world, s0, cfg)


def resolve_triples(cfg: ExperimentConfig, world) -> list[tuple[int, int, int]]:
    base = base_of(world)
    if cfg.triples == "all" or (cfg.triples == "default" and cfg.world.name not in DEFAULT_TRIPLES):
        return [(s, a, t) for s in base.states for a in base.actions for t in base.states]
    names = [DEFAULT_TRIPLES[cfg.world.name]] if cfg.triples == "default" else cfg.triples
    return [(base.state_index(s), base.action_index(a), base.state_index(t)) for s, a, t in names]


@dataclass(frozen=True, order=True)
class Cell:
    p: float | None
    triple: tuple
    n: int
    delta: float
    seed: int


def cells_of(cfg: ExperimentConfig) -> list[Cell]:
    ps = cfg.p_grid if cfg.vary else (None,)
    out = []
    for p in ps:
        world = build_world(cfg, p)
        for triple in resolve_triples(cfg, world):
            for n in cfg.n_grid:
                for d in cfg.delta_grid:
                    for seed in cfg.seeds:
                        out.append(Cell(p, triple, n, d, seed))
    return sorted(out)


def build_world(cfg: ExperimentConfig, p: float | None):
    return cfg.world.build(**({cfg.vary: p} if cfg.vary else {}))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def world_id(cfg: ExperimentConfig, p) -> str:
    return cfg.world.ident + (f";{cfg.vary}={p!r}" if cfg.vary else "")


def run_cell(cfg: ExperimentConfig, cell: Cell, worst_case: bool = True) -> tuple[dict, Estimate, float]:
    world = build_world(cfg, cell.p)
    base = base_of(world)
    s0 = cfg.s0 if cfg.s0 is not None else 0
    agent = make_agent(world, cfg.method, cfg.agent, cell.delta, cell.seed, s0)
    t0 = time.perf_counter()
    est = run_extraction(cfg.method, agent, cell.triple, cell.n, cell.delta, s0=s0)
    wall = time.perf_counter() - t0
    p_true = float(base.kernel[cell.triple])
    err = abs(est.p_hat - p_true)
    bound = est.bound_at(p_true)
    s, a, t = cell.triple
    row = {
        "world": world_id(cfg, cell.p),
        "s": base.state_names[s],
        "a": base.action_names[a],
        "s_next": base.state_names[t],
        "method": cfg.method.value,
        "n": cell.n,
        "delta": cell.delta,
        "agent": cfg.agent,
        "seed": cell.seed,
        "p_true": p_true,
        "p_hat": est.p_hat,
        "abs_error": err,
        "bound_at_true": bound,
        "bound_holds": bool(err <= bound),
        "queries": est.queries,
        "worst_case_error": identification_radius(est) if worst_case else float("nan"),
    }
    return row, est, wall


def _run_cell_job(args):
    cfg, cell = args
    row, est, wall = run_cell(cfg, cell)
    dump = None if row["bound_holds"] else transcript_dump(row, est)
    return row, wall, dump


def pool_size(n_jobs: int) -> int:
    env = os.environ.get("WORLDLENS_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def run_sweep(cfg: ExperimentConfig) -> tuple[list[dict], list[float]]:
    """Run every cell; rows come back in sorted cell order whatever the pool does."""
    for d in cfg.delta_grid:
        check_preconditions(cfg.method, d, cfg.agent)
    cells = cells_of(cfg)
    jobs = [(cfg, c) for c in cells]
    workers = pool_size(len(jobs))
    if workers == 1:
        results = [_run_cell_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_cell_job, jobs))
    rows = [r for r, _, _ in results]
    walls = [w for _, w, _ in results]
    bad = [(r, d) for r, _, d in results if d is not None]
    if bad:
        raise BoundViolation([r for r, _ in bad], [d for _, d in bad])
    return rows, walls


def transcript_dump(row: dict, est: Estimate) -> str:
    lines = [f"# violation: {row}"]
    for rec in est.transcript:
        lines.append(f"{rec.family} {rec.params} p_a={rec.p_a!r} p_b={rec.p_b!r}")
    return "\n".join(lines)


def slope_groups(rows: list[dict], metric: str = "worst_case_error") -> list[tuple[dict, float]]:
    """Least-squares slope of the per-n maximum of ``metric`` for each (method, agent, delta, p, triple)."""
    groups: dict = defaultdict(lambda: defaultdict(float))
    for r in rows:
        key = (r["world"], r["s"], r["a"], r["s_next"], r["method"], r["agent"], r["delta"])
        groups[key][r["n"]] = max(groups[key][r["n"]], r[metric])
    out = []
    for key in sorted(groups):
        by_n = groups[key]
        ns = sorted(by_n)
        out.append((dict(zip(("world", "s", "a", "s_next", "method", "agent", "delta"), key)), fitted_slope(ns, [by_n[n] for n in ns])))
    return out


def format_csv(rows: list[dict], columns=SWEEP_COLUMNS, footer: list[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    for line in footer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def sweep_footer(rows: list[dict]) -> list[str]:
    lines = []
    for metric in ("worst_case_error", "abs_error"):
        for key, slope in slope_groups(rows, metric):
            desc = ",".join(f"{k}={v}" for k, v in key.items())
            lines.append(f"slope,{desc},metric={metric},value={slope!r}")
    return lines


def timing_csv(rows: list[dict], walls: list[float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("world", "s", "a", "s_next", "n", "delta", "seed", "wall_time"))
    for r, t in zip(rows, walls):
        w.writerow((r["world"], r["s"], r["a"], r["s_next"], r["n"], _fmt(r["delta"]), r["seed"], f"{t:.6f}"))
    return buf.getvalue()


# ---------------------------------------------------------------- whole-kernel extraction


def run_extract(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Extract every configured triple for each (n, delta, seed); returns rows and kernel estimates."""
    for d in cfg.delta_grid:
        check_preconditions(cfg.method, d, cfg.agent)
    world = build_world(cfg, cfg.p_grid[0] if cfg.vary else None)
    base: World = base_of(world)
    triples = resolve_triples(cfg, world)
    s0 = cfg.s0 if cfg.s0 is not None else 0
    rows, kernels, dumps = [], {}, []
    for n in cfg.n_grid:
        for d in cfg.delta_grid:
            for seed in cfg.seeds:
                agent = make_agent(world, cfg.method, cfg.agent, d, seed, s0)
                ests = {tr: run_extraction(cfg.method, agent, tr, n, d, s0=s0) for tr in triples}
                kernel = KernelEstimate(ests, base.n_states, base.n_actions)
                kernels[(n, d, seed)] = kernel
                norm = _normalized_rows(ests, base.n_states)
                for tr in triples:
                    est = ests[tr]
                    p_true = float(base.kernel[tr])
                    err = abs(est.p_hat - p_true)
                    row = {
                        "world": world_id(cfg, cfg.p_grid[0] if cfg.vary else None),
                        "s": base.state_names[tr[0]],
                        "a": base.action_names[tr[1]],
                        "s_next": base.state_names[tr[2]],
                        "method": cfg.method.value,
                        "n": n,
                        "delta": d,
                        "agent": cfg.agent,
                        "seed": seed,
                        "p_true": p_true,
                        "p_hat": est.p_hat,
                        "p_normalized": norm.get(tr, float("nan")),
                        "bound_reported": est.bound,
                        "bound_at_true": est.bound_at(p_true),
                        "abs_error": err,
                        "bound_holds": bool(err <= est.bound_at(p_true)),
                        "queries": est.queries,
                    }
                    rows.append(row)
                    if not row["bound_holds"]:
                        dumps.append(transcript_dump(row, est))
    if dumps:
        raise BoundViolation([r for r in rows if not r["bound_holds"]], dumps)
    return rows, kernels


def _normalized_rows(ests: dict, n_states: int) -> dict:
    """Simplex projection of every complete (s, a) row among the extracted triples."""
    rows: dict = defaultdict(dict)
    for (s, a, t), est in ests.items():
        rows[(s, a)][t] = est.p_hat
    out = {}
    for (s, a), entries in rows.items():
        if len(entries) < n_states:
            continue
        ts = sorted(entries)
        proj = project_simplex(np.array([entries[t] for t in ts]))
        for t, v in zip(ts, proj):
            out[(s, a, t)] = float(v)
    return out
