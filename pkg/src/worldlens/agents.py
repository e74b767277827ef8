"""Goal-conditioned agents that answer the counted-family queries.

Agents return exact action distributions. On a family goal the first action
is chosen by comparing the closed-form values of the two branches; afterwards
a fully observable agent loops toward the watched pair ``(s, a)`` and an
observation agent walks uniformly at random.
"""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass

import numpy as np

from .goals import CountedFamily, Family
from .mdp import (
    FiniteHistory,
    FirstActionThen,
    ObservableWorld,
    ObservationHistory,
    StationaryPolicy,
    World,
    almost_sure_reach_policy,
    point_mass,
)
from .prob import BlindPolicy, branch_log_values


class Mode(enum.Enum):
    OPTIMAL = "optimal"
    RANDOM_FEASIBLE = "random"
    ADVERSARIAL = "adversarial"


class UnsupportedGoal(ValueError):
    pass


@dataclass(frozen=True)
class DeltaConfig:
    """How much sub-optimality an agent allows itself and how it spends it.

    ``deterministic`` agents answer with point masses; a deterministic
    adversary takes the second marker whenever that is still δ-optimal.
    ``spill`` lets a stochastic adversary leave mass on non-marker actions.
    """

    delta: float = 0.0
    mode: Mode = Mode.OPTIMAL
    seed: int = 0
    deterministic: bool = False
    spill: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class QueryRecord:
    family: str
    params: tuple
    a: int
    b: int
    p_a: float
    p_b: float

    @property
    def remainder(self) -> float:
        return 1.0 - self.p_a - self.p_b

    @property
    def is_point_mass(self) -> bool:
        return {self.p_a, self.p_b} == {0.0, 1.0}

    @property
    def chose_b(self) -> bool:
        return self.p_b >= self.p_a


def feasible_interval(v_a: float, v_b: float, delta: float) -> tuple[float, float]:
    """Range of ``p_a`` (with ``p_b = 1 - p_a``) meeting ``(1-δ)max(V) <= p_a V_a + p_b V_b``."""
    target = (1 - delta) * max(v_a, v_b)
    if v_a > v_b:
        return (min(max((target - v_b) / (v_a - v_b), 0.0), 1.0), 1.0)
    if v_a < v_b:
        return (0.0, min(max((v_b - target) / (v_b - v_a), 0.0), 1.0))
    return (0.0, 1.0)


def goal_stream(seed: int, goal: CountedFamily) -> np.random.Generator:
    """Random stream keyed by the goal's parameters, so repeated queries agree."""
    return np.random.default_rng([seed, zlib.crc32(repr(goal.params).encode())])


class FamilyAgent:
    """δ-optimal agent on counted families over a fully observable world."""

    def __init__(self, world: World | ObservableWorld, s0: int | None = None, config: DeltaConfig = DeltaConfig()):
        self.world = world.base if isinstance(world, ObservableWorld) else world
        self.s0 = s0
        self.config = config
        self._loops: dict = {}

    # ---- first action
    def _p(self, goal: CountedFamily) -> float:
        s, a, t = goal.triple
        return float(self.world.kernel[s, a, t])

    def branch_values(self, goal: CountedFamily) -> tuple[int, float, int, float]:
        """``(a, V_a, b, V_b)`` scaled so the larger value is 1."""
        if not isinstance(goal, CountedFamily) or goal.tag not in (Family.XI_K, Family.XI_RS):
            raise UnsupportedGoal("family agents only answer two-branch counted families")
        (a, l_a), (b, l_b) = branch_log_values(goal, self._p(goal))
        # only the ratio matters, so rescale by the larger value
        top = max(l_a, l_b)
        return a, math.exp(l_a - top), b, math.exp(l_b - top)

    def first_pair(self, goal: CountedFamily) -> tuple[float, float]:
        """``(p_a, p_b)`` placed on the two markers at the empty history."""
        a, v_a, b, v_b = self.branch_values(goal)
        cfg = self.config
        if cfg.deterministic:
            return self._deterministic(goal, a, v_a, b, v_b)
        lo, hi = feasible_interval(v_a, v_b, cfg.delta)
        if cfg.mode is Mode.OPTIMAL:
            p_a = 1.0 if v_a > v_b else 0.0 if v_a < v_b else 0.5
        elif cfg.mode is Mode.ADVERSARIAL:
            if cfg.spill:
                return self._spill(v_a, v_b)
            p_a = 0.5 if v_a == v_b else min(max(0.5, lo), hi)
        else:
            p_a = float(goal_stream(cfg.seed, goal).uniform(lo, hi))
        return p_a, 1.0 - p_a

    def _deterministic(self, goal, a, v_a, b, v_b):
        cfg = self.config
        target = (1 - cfg.delta) * max(v_a, v_b)
        ok_a, ok_b = v_a >= target, v_b >= target
        if cfg.mode is Mode.OPTIMAL or cfg.delta == 0.0:
            pick_a = v_a > v_b or (v_a == v_b and a < b)
        elif cfg.mode is Mode.ADVERSARIAL:
            pick_a = not ok_b
        else:
            pick_a = ok_a and (not ok_b or bool(goal_stream(cfg.seed, goal).integers(2)))
        return (1.0, 0.0) if pick_a else (0.0, 1.0)

    def _spill(self, v_a, v_b):
        # smallest |p_a - p_b| with p_a + p_b <= 1; spare mass goes elsewhere
        if self.world.n_actions < 3:
            raise ValueError("spilling mass needs a third action")
        hi_v, lo_v = max(v_a, v_b), min(v_a, v_b)
        target = (1 - self.config.delta) * hi_v
        if hi_v == 0.0:
            return 0.0, 0.0
        if target <= (hi_v + lo_v) / 2:
            t = target / (hi_v + lo_v)
            return t, t
        g = (target - (hi_v + lo_v) / 2) / ((hi_v - lo_v) / 2)
        big, small = (1 + g) / 2, (1 - g) / 2
        return (big, small) if v_a >= v_b else (small, big)

    def first_action(self, goal: CountedFamily) -> np.ndarray:
        a, _, b, _ = self.branch_values(goal)
        p_a, p_b = self.first_pair(goal)
        nA = self.world.n_actions
        dist = np.zeros(nA)
        dist[a] += p_a
        dist[b] += p_b
        rest = 1.0 - p_a - p_b
        if rest > 0:
            others = [c for c in range(nA) if c not in (a, b)]
            dist[others] += rest / len(others)
        return dist

    # ---- afterwards
    def loop_policy(self, goal: CountedFamily) -> StationaryPolicy:
        s, a, _ = goal.triple
        pol = self._loops.get((s, a))
        if pol is None:
            pol = self._loops[(s, a)] = almost_sure_reach_policy(self.world, [(s, a)])
        return pol

    def query(self, goal: CountedFamily, history: FiniteHistory) -> np.ndarray:
        if len(history) == 0:
            return self.first_action(goal)
        return self.loop_policy(goal).table[history.last]

    __call__ = query

    def as_policy(self, goal: CountedFamily) -> FirstActionThen:
        return FirstActionThen(self.first_action(goal), self.loop_policy(goal))


class ObservationAgent(FamilyAgent):
    """Observation-based agent: family first action, then a uniform random walk.

    Its answers never depend on what it observes.
    """

    def __init__(self, world: ObservableWorld, config: DeltaConfig = DeltaConfig()):
        super().__init__(world, None, config)
        self.observable = world

    def query(self, goal: CountedFamily, history: ObservationHistory) -> np.ndarray:
        if len(history) == 0:
            return self.first_action(goal)
        return np.full(self.world.n_actions, 1.0 / self.world.n_actions)

    __call__ = query

    def as_policy(self, goal: CountedFamily) -> BlindPolicy:
        nA = self.world.n_actions
        return BlindPolicy(np.full(nA, 1.0 / nA), self.first_action(goal))


def family_optimal_agent(world, s0: int | None = None) -> FamilyAgent:
    """Deterministic optimal family agent; ties go to the smaller action index."""
    return FamilyAgent(world, s0, DeltaConfig(0.0, Mode.OPTIMAL, deterministic=True))


def delta_agent(world, s0: int | None = None, config: DeltaConfig = DeltaConfig()) -> FamilyAgent:
    return FamilyAgent(world, s0, config)


def random_walk_agent(world: ObservableWorld, config: DeltaConfig | None = None) -> ObservationAgent:
    return ObservationAgent(world, config or DeltaConfig(0.0, Mode.OPTIMAL, deterministic=True))


def probe_first_action(agent, goal: CountedFamily, s0: int, world: World | ObservableWorld | None = None) -> QueryRecord:
    """Ask ``agent`` for its first action on ``goal`` and record the two marker masses.

    Observation agents are asked at every possible first observation of
    ``s0`` and the answers are mixed with the observation probabilities.
    """
    a, b = goal.a_marker, goal.b
    world = world if world is not None else getattr(agent, "observable", None) or getattr(agent, "world", None)
    if isinstance(world, ObservableWorld) and isinstance(agent, ObservationAgent | _ObservationCallable):
        row = world.obs_kernel[s0]
        seen = np.flatnonzero(row)
        answers = [np.asarray(agent.query(goal, ObservationHistory((o,))), dtype=float) for o in seen]
        # identical answers are returned as is, so rounding cannot leak the observation kernel
        if all(np.array_equal(ans, answers[0]) for ans in answers):
            dist = answers[0]
        else:
            dist = sum(row[o] * ans for o, ans in zip(seen, answers))
    else:
        dist = np.asarray(agent.query(goal, FiniteHistory((s0,))))
    return QueryRecord(goal.tag.value, goal.params, a, b, float(dist[a]), float(dist[b]))


@dataclass(frozen=True)
class _ObservationCallable:
    """Adapter marking a plain ``(goal, ObservationHistory) -> dist`` callable as observation-based."""

    fn: object

    def query(self, goal, history):
        return self.fn(goal, history)


def observation_agent(fn) -> _ObservationCallable:
    return _ObservationCallable(fn)


@dataclass(frozen=True)
class UniformAgent:
    """Answers uniformly on every query; useful as an uninformative baseline."""

    n_actions: int

    def query(self, goal, history):
        return np.full(self.n_actions, 1.0 / self.n_actions)
