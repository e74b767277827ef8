"""Recover transition probabilities from an agent's first-action answers.

Every extractor issues counted-family queries, reads the probability the
agent puts on each marker action, and turns the answers into an estimate of
``p = P(s'|s, a)`` together with a guaranteed error bound.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .agents import QueryRecord, probe_first_action
from .goals import Family, make_family
from .mdp import ObservableWorld, World

REPORT_INFLATION = 1.1


class ExtractionMethod(enum.Enum):
    T1_DET = "T1_DET"
    T2_STOCH = "T2_STOCH"
    T3_POMDP = "T3_POMDP"
    T4_WIDTH2_DET = "T4_WIDTH2_DET"
    T4_WIDTH2_DELTA = "T4_WIDTH2_DELTA"


METHOD_NAMES = {
    "t1": ExtractionMethod.T1_DET,
    "t2": ExtractionMethod.T2_STOCH,
    "t3": ExtractionMethod.T3_POMDP,
    "t4": ExtractionMethod.T4_WIDTH2_DET,
    "t4d": ExtractionMethod.T4_WIDTH2_DELTA,
}


class PreconditionError(ValueError):
    """The requested extraction cannot give a guarantee (e.g. δ >= 1/2)."""


class ProtocolError(RuntimeError):
    """The agent's answers are inconsistent with the protocol's assumptions."""

    def __init__(self, msg: str, transcript: list | None = None):
        super().__init__(msg)
        self.transcript = transcript or []


@dataclass
class Estimate:
    """Estimate of one transition probability.

    ``bound`` is the reported error bound: the method's bound evaluated at
    ``p_hat`` and inflated by 10% where it depends on ``p``. ``bound_at(p)``
    gives the guaranteed bound at a known true ``p``.
    """

    p_hat: float
    method: ExtractionMethod
    n: int
    delta: float
    triple: tuple
    transcript: list = field(default_factory=list, repr=False)
    x: int | None = None
    r0: int | None = None
    reflected: bool = False
    branch: str = "crossover"
    bound: float = field(init=False)

    def __post_init__(self):
        dep = self.method in (ExtractionMethod.T1_DET, ExtractionMethod.T2_STOCH, ExtractionMethod.T3_POMDP)
        self.bound = self.bound_at(self.p_hat) * (REPORT_INFLATION if dep else 1.0)

    @property
    def queries(self) -> int:
        return len(self.transcript)

    def bound_at(self, p: float) -> float:
        m, n, d = self.method, self.n, self.delta
        if m is ExtractionMethod.T1_DET:
            return bounds.crossover_bound(p, n, d)
        if m in (ExtractionMethod.T2_STOCH, ExtractionMethod.T3_POMDP):
            return bounds.stochastic_crossover_bound(p, n, d)
        if m is ExtractionMethod.T4_WIDTH2_DET:
            return bounds.width2_zero_bound(n) if self.branch == "zero" else bounds.width2_interior_bound(n)
        if self.branch == "zero":
            return bounds.width2_delta_zero_bound(n, d)
        return bounds.width2_delta_bound(n, d)

    @property
    def diagnostics(self) -> dict:
        """Bernstein quantities at ``p_hat`` (stochastic methods only)."""
        if self.method not in (ExtractionMethod.T2_STOCH, ExtractionMethod.T3_POMDP):
            return {}
        L = bounds.bernstein_L(self.delta)
        var = self.n * self.p_hat * (1 - self.p_hat)
        return {
            "mu": self.n * self.p_hat,
            "sigma2": var,
            "L": L,
            "t_star": bounds.bernstein_t_star(var, L),
            "epsilon": bounds.epsilon_threshold(self.delta),
        }


def _require(cond: bool, msg: str):
    if not cond:
        raise PreconditionError(msg)


def _stochastic_delta(delta: float):
    _require(delta < 0.5, f"delta={delta} >= 1/2: an agent may answer every query with (1/2, 1/2) and reveal nothing")
    _require(delta >= 0.0, f"delta={delta} is negative")


def _markers(markers, world):
    a, b = markers
    _require(a != b, "marker actions must differ")
    if world is not None:
        _require(world.n_actions >= 2, "the two-branch queries need at least two actions")
    return a, b


def _world_of(agent, world):
    if world is not None:
        return world
    return getattr(agent, "observable", None) or getattr(agent, "world", None)


def _xi_k_transcript(agent, triple, n, s0, markers, world) -> list[QueryRecord]:
    a, b = _markers(markers, world)
    nA = world.n_actions if world is not None else None
    return [
        probe_first_action(agent, make_family(Family.XI_K, triple, a=a, b=b, n=n, k=k, n_actions=nA), s0, world)
        for k in range(-1, n + 1)
    ]


def crossover_index(transcript: list[QueryRecord]) -> int:
    """``max{k in [-1, n] : p_b,k >= p_a,k}``, or -1 if no such k."""
    x = -1
    for k, rec in enumerate(transcript, start=-1):
        if rec.p_b >= rec.p_a:
            x = k
    return x


def extract_deterministic(agent, triple, n: int, delta: float = 0.0, *, s0: int = 0, markers=(0, 1), world=None) -> Estimate:
    """Crossover extraction from a deterministic agent.

    The answers must switch once, from the ``> k`` marker to the ``<= k``
    marker; the estimate is the first ``k`` answered with the ``<= k`` marker,
    divided by ``n``.
    """
    _require(n >= 2, "n must be at least 2")
    _require(0.0 <= delta < 1.0, f"delta={delta} outside [0, 1)")
    world = _world_of(agent, world)
    recs = _xi_k_transcript(agent, triple, n, s0, markers, world)
    for k, rec in enumerate(recs, start=-1):
        if not rec.is_point_mass:
            raise ProtocolError(f"answer to k={k} is not a point mass ({rec.p_a}, {rec.p_b}); use the stochastic extractor", recs)
    chose_b = [rec.p_b == 1.0 for rec in recs]
    x = crossover_index(recs)
    if not all(chose_b[: x + 2]):
        raise ProtocolError("answers do not switch exactly once; agent inconsistent", recs)
    p_hat = min(max((x + 1) / n, 0.0), 1.0)
    return Estimate(p_hat, ExtractionMethod.T1_DET, n, delta, tuple(triple), recs, x=x)


def extract_stochastic(agent, triple, n: int, delta: float, *, s0: int = 0, markers=(0, 1), world=None) -> Estimate:
    """Crossover extraction from a stochastic δ-optimal agent (δ < 1/2)."""
    _stochastic_delta(delta)
    _require(n >= 1, "n must be at least 1")
    world = _world_of(agent, world)
    recs = _xi_k_transcript(agent, triple, n, s0, markers, world)
    x = crossover_index(recs)
    return Estimate(min(max(x / n, 0.0), 1.0), ExtractionMethod.T2_STOCH, n, delta, tuple(triple), recs, x=x)


def extract_pomdp(agent, triple, n: int, delta: float, *, s0: int = 0, markers=(0, 1), world: ObservableWorld | None = None) -> Estimate:
    """Same protocol as :func:`extract_stochastic` for observation-based agents."""
    _stochastic_delta(delta)
    _require(n >= 1, "n must be at least 1")
    world = _world_of(agent, world)
    recs = _xi_k_transcript(agent, triple, n, s0, markers, world)
    x = crossover_index(recs)
    return Estimate(min(max(x / n, 0.0), 1.0), ExtractionMethod.T3_POMDP, n, delta, tuple(triple), recs, x=x)


class _Width2Prober:
    def __init__(self, agent, triple, s0, markers, world):
        self.agent, self.triple, self.s0, self.world = agent, tuple(triple), s0, world
        self.a, self.b = _markers(markers, world)
        self.reflect = False
        self.transcript: list[QueryRecord] = []

    def chose_a(self, r: int, s: int) -> bool:
        nA = self.world.n_actions if self.world is not None else None
        goal = make_family(Family.XI_RS, self.triple, a=self.a, b=self.b, r=r, s=s, reflect=self.reflect, n_actions=nA)
        rec = probe_first_action(self.agent, goal, self.s0, self.world)
        self.transcript.append(rec)
        if not rec.is_point_mass:
            raise ProtocolError(f"answer to ({r}, {s}) is not a point mass", self.transcript)
        return rec.p_a == 1.0

    def finish(self, q_hat: float) -> float:
        return 1.0 - q_hat if self.reflect else q_hat


def extract_width2_exact(agent, triple, n: int, *, s0: int = 0, markers=(0, 1), world=None) -> Estimate:
    """Width-two extraction from a deterministic optimal agent, error O(log n / n).

    Work with ``q = min(p, 1-p)`` (decided by the ``(1, 1)`` query). If even a
    single success is less likely than ``n`` failures the estimate is 0;
    otherwise the switch point of ``q^r`` against ``(1-q)^n`` over ``r = 0..n``
    brackets ``log(1-q)/log(q)`` to within ``1/n`` and the bracket's midpoint
    is inverted.
    """
    _require(n >= 2, "n must be at least 2")
    world = _world_of(agent, world)
    pr = _Width2Prober(agent, triple, s0, markers, world)
    pr.reflect = pr.chose_a(1, 1)
    if not pr.chose_a(1, n):
        return Estimate(pr.finish(0.0), ExtractionMethod.T4_WIDTH2_DET, n, 0.0, pr.triple, pr.transcript,
                        reflected=pr.reflect, branch="zero")
    answers = [pr.chose_a(r, n) for r in range(n + 1)]
    r_a = max(r for r, ok in enumerate(answers) if ok) if any(answers) else -1
    if r_a < 0 or not all(answers[: r_a + 1]):
        raise ProtocolError("answers over r are not a single switch; agent not optimal", pr.transcript)
    lo, hi = 1.0 / (n + 1), 0.5
    mid = (r_a + 0.5) / n
    q_hat = bounds.f_inverse(min(max(mid, bounds.f_log_ratio(lo)), 1.0), lo, hi)
    return Estimate(pr.finish(q_hat), ExtractionMethod.T4_WIDTH2_DET, n, 0.0, pr.triple, pr.transcript,
                    r0=r_a, reflected=pr.reflect, branch="interior")


def extract_width2_delta(agent, triple, n: int, delta: float, *, s0: int = 0, markers=(0, 1), world=None) -> Estimate:
    """Width-two extraction from a deterministic δ-optimal agent (δ < 1/2).

    After the ``(1, 1)`` query ``q <= 2/3``. A ``b`` answer to ``(1, n)``
    gives the estimate 0; otherwise the first ``r`` in ``0..3n`` answered with
    ``b`` locates ``log(1-q)/log(q)`` near ``r/n`` (3 if there is none).
    """
    _stochastic_delta(delta)
    _require(n >= 2, "n must be at least 2")
    world = _world_of(agent, world)
    pr = _Width2Prober(agent, triple, s0, markers, world)
    pr.reflect = pr.chose_a(1, 1)
    if not pr.chose_a(1, n):
        return Estimate(pr.finish(0.0), ExtractionMethod.T4_WIDTH2_DELTA, n, delta, pr.triple, pr.transcript,
                        reflected=pr.reflect, branch="zero")
    r0 = None
    for r in range(3 * n + 1):
        if not pr.chose_a(r, n):
            r0 = r
            break
    alpha = 3.0 if r0 is None else r0 / n
    lo, hi = (1 - delta) / (1 + n * (1 - delta)), 2.0 / 3.0
    q_hat = bounds.f_inverse(alpha, lo, hi)
    return Estimate(pr.finish(q_hat), ExtractionMethod.T4_WIDTH2_DELTA, n, delta, pr.triple, pr.transcript,
                    r0=r0, reflected=pr.reflect, branch="interior")


EXTRACTORS = {
    ExtractionMethod.T1_DET: extract_deterministic,
    ExtractionMethod.T2_STOCH: extract_stochastic,
    ExtractionMethod.T3_POMDP: extract_pomdp,
    ExtractionMethod.T4_WIDTH2_DET: extract_width2_exact,
    ExtractionMethod.T4_WIDTH2_DELTA: extract_width2_delta,
}


def run_extraction(method: ExtractionMethod | str, agent, triple, n: int, delta: float = 0.0, **kw) -> Estimate:
    method = METHOD_NAMES.get(method, method) if isinstance(method, str) else method
    method = ExtractionMethod(method)
    if method is ExtractionMethod.T4_WIDTH2_DET:
        _require(delta == 0.0, "the exact width-two extractor needs an optimal agent (delta = 0)")
        return extract_width2_exact(agent, triple, n, **kw)
    return EXTRACTORS[method](agent, triple, n, delta, **kw)


# ---------------------------------------------------------------- whole kernels


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


@dataclass
class KernelEstimate:
    estimates: dict
    n_states: int
    n_actions: int

    def raw(self) -> np.ndarray:
        P = np.full((self.n_states, self.n_actions, self.n_states), np.nan)
        for (s, a, t), est in self.estimates.items():
            P[s, a, t] = est.p_hat
        return P

    def normalized(self) -> np.ndarray:
        """Raw rows projected onto the simplex; rows with missing entries stay NaN."""
        raw = self.raw()
        out = np.full_like(raw, np.nan)
        for s in range(self.n_states):
            for a in range(self.n_actions):
                row = raw[s, a]
                if not np.isnan(row).any():
                    out[s, a] = project_simplex(row)
        return out


def reconstruct_world(
    agent,
    world: World | ObservableWorld,
    n: int,
    delta: float = 0.0,
    method: ExtractionMethod | str = ExtractionMethod.T2_STOCH,
    states=None,
    actions=None,
    **kw,
) -> KernelEstimate:
    """Extract every ``(s, a, s')`` with ``s`` in ``states`` and ``a`` in ``actions``."""
    base = world.base if isinstance(world, ObservableWorld) else world
    states = base.states if states is None else states
    actions = base.actions if actions is None else actions
    kw.setdefault("world", world)
    out = {}
    for s in states:
        for a in actions:
            for t in base.states:
                out[(s, a, t)] = run_extraction(method, agent, (s, a, t), n, delta, **kw)
    return KernelEstimate(out, base.n_states, base.n_actions)


def extraction_error(est: Estimate, p_true: float) -> float:
    return abs(est.p_hat - p_true)


def query_budget(method: ExtractionMethod, n: int) -> int:
    if method in (ExtractionMethod.T1_DET, ExtractionMethod.T2_STOCH, ExtractionMethod.T3_POMDP):
        return n + 2
    if method is ExtractionMethod.T4_WIDTH2_DET:
        return n + 3
    return 3 * n + 3

