"""Tail curves, sampled first-action masses and crossover spread for one (p, n, δ)."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from ..agents import DeltaConfig, FamilyAgent, Mode, feasible_interval, probe_first_action
from ..bounds import epsilon_threshold
from ..builtins import make_chain_world
from ..extraction import crossover_index
from ..goals import Family, make_family
from ..prob import closed_form_tail_gt, closed_form_tail_le

TRIPLE = (2, 1, 3)  # (s0, R, s1) in the chain world


@dataclass
class Figure4:
    p: float
    n: int
    delta: float
    seed: int
    epsilon: float
    rows: list[dict]
    crossovers: list[int]

    @property
    def forced_b(self) -> list[int]:
        return [r["k"] for r in self.rows if r["forced"] == "b"]

    @property
    def forced_a(self) -> list[int]:
        return [r["k"] for r in self.rows if r["forced"] == "a"]

    @property
    def boundary(self) -> float:
        """Midpoint between the last k forced onto b and the next k."""
        return max(self.forced_b) + 0.5

    @property
    def crossover_counts(self) -> dict[int, int]:
        return dict(sorted(Counter(self.crossovers).items()))

    @property
    def majority(self) -> int:
        counts = Counter(self.crossovers)
        return max(sorted(counts), key=lambda x: counts[x])


def figure4(p: float = 0.35, n: int = 20, delta: float = 0.2, seed: int = 0, draws: int = 200) -> Figure4:
    world = make_chain_world(p, 0.5)
    a, b = 0, 1
    eps = epsilon_threshold(delta)

    def transcript(s):
        agent = FamilyAgent(world, 2, DeltaConfig(delta, Mode.RANDOM_FEASIBLE, s))
        goals = [make_family(Family.XI_K, TRIPLE, a=a, b=b, n=n, k=k) for k in range(-1, n + 1)]
        return [probe_first_action(agent, g, 2) for g in goals]

    shown = transcript(seed)
    rows = []
    for k, rec in zip(range(-1, n + 1), shown):
        le, gt = closed_form_tail_le(p, n, k), closed_form_tail_gt(p, n, k)
        lo, hi = feasible_interval(le, gt, delta)
        forced = "a" if lo > 0.5 else "b" if hi < 0.5 else ""
        rows.append({
            "k": k, "P_le": le, "P_gt": gt, "p_a": rec.p_a, "p_b": rec.p_b,
            "p_a_min": lo, "p_a_max": hi, "forced": forced, "epsilon": eps,
        })
    xs = [crossover_index(transcript(s)) for s in range(draws)]
    return Figure4(p, n, delta, seed, eps, rows, xs)


FIG4_COLUMNS = ("k", "P_le", "P_gt", "p_a", "p_b", "p_a_min", "p_a_max", "forced", "epsilon")


def figure4_csv(fig: Figure4) -> str:
    lines = [",".join(FIG4_COLUMNS)]
    for r in fig.rows:
        lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in FIG4_COLUMNS))
    lines.append(f"# p={fig.p!r},n={fig.n},delta={fig.delta!r},seed={fig.seed},epsilon={fig.epsilon!r}")
    lines.append(f"# forced_boundary={fig.boundary!r}")
    lines.append(f"# crossover_x_shown={crossover_index_of(fig)}")
    counts = ";".join(f"{x}:{c}" for x, c in fig.crossover_counts.items())
    lines.append(f"# crossover_counts={counts},draws={len(fig.crossovers)},majority={fig.majority}")
    return "\n".join(lines) + "\n"


def crossover_index_of(fig: Figure4) -> int:
    x = -1
    for r in fig.rows:
        if r["p_b"] >= r["p_a"]:
            x = r["k"]
    return x
