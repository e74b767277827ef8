"""Goal success probabilities: closed forms, exact product-chain solves,
optimal values, Monte Carlo cross-checks and the partially observable case.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Protocol, Sequence

import numpy as np
from scipy import sparse

from .goals import ACCEPT, REJECT, AnyGoal, CountedFamily, Family, JointMonitor, Verdict, depth, materialize, satisfies_prefix
from .mdp import (
    FiniteHistory,
    ObservableWorld,
    ObservationHistory,
    StationaryPolicy,
    World,
    _sample,
    point_mass,
)


class Method(enum.Enum):
    CLOSED_FORM = "CLOSED_FORM"
    LINEAR_SOLVE = "LINEAR_SOLVE"
    VALUE_ITERATION = "VALUE_ITERATION"
    MONTE_CARLO = "MONTE_CARLO"


@dataclass(frozen=True)
class SuccessProbability:
    value: float
    method: Method
    half_width: float | None = None
    pending: float | None = None
    samples: int | None = None
    crosscheck: float | None = None

    def __float__(self):
        return float(self.value)

    @property
    def bracket(self) -> tuple[float, float]:
        """Interval certainly containing the exact value (Monte Carlo: accepted .. accepted + pending)."""
        return (self.value, self.value + (self.pending or 0.0))


# ---------------------------------------------------------------- closed forms

LOG_SPACE_N = 30


def closed_form_phi(p: float, w: Sequence[int]) -> float:
    ones = sum(w)
    return p**ones * (1 - p) ** (len(w) - ones)


def _log_pmf(p, n, r):
    if p == 0.0:
        return 0.0 if r == 0 else -math.inf
    if p == 1.0:
        return 0.0 if r == n else -math.inf
    return math.lgamma(n + 1) - math.lgamma(r + 1) - math.lgamma(n - r + 1) + r * math.log(p) + (n - r) * math.log1p(-p)


def closed_form_rho(p: float, n: int, r: int) -> float:
    """Binomial pmf ``C(n, r) p^r (1-p)^(n-r)``; log-space above n = 30."""
    if not 0 <= r <= n:
        raise ValueError(f"r={r} outside [0, {n}]")
    if n > LOG_SPACE_N:
        return math.exp(_log_pmf(p, n, r))
    return math.comb(n, r) * p**r * (1 - p) ** (n - r)


@lru_cache(maxsize=4096)
def binomial_tails(p: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(le, gt)`` with ``le[k+1] = P(X <= k)``, ``gt[k+1] = P(X > k)`` for k = -1..n.

    Each tail is summed from its own end so small tails keep full precision.
    """
    pmf = np.array([closed_form_rho(p, n, r) for r in range(n + 1)])
    le = np.concatenate([[0.0], np.cumsum(pmf)])
    gt = np.concatenate([np.cumsum(pmf[::-1])[::-1], [0.0]])
    le[-1] = 1.0
    gt[0] = 1.0
    le.setflags(write=False)
    gt.setflags(write=False)
    return le, gt


def _check_k(n, k):
    if not -1 <= k <= n:
        raise ValueError(f"k={k} outside [-1, {n}]")


def closed_form_tail_le(p: float, n: int, k: int) -> float:
    _check_k(n, k)
    return float(binomial_tails(float(p), n)[0][k + 1])


def closed_form_tail_gt(p: float, n: int, k: int) -> float:
    _check_k(n, k)
    return float(binomial_tails(float(p), n)[1][k + 1])


def family_value(goal: CountedFamily, p: float) -> float:
    """Optimal success probability of a counted family when ``P(s'|s,a) = p``."""
    tag = goal.tag
    if tag is Family.PHI_W:
        return closed_form_phi(p, goal.w)
    if tag is Family.RHO:
        return closed_form_rho(p, goal.n, goal.r)
    if tag is Family.PSI_LE:
        return closed_form_tail_le(p, goal.n, goal.k)
    if tag is Family.CHI_GT:
        return closed_form_tail_gt(p, goal.n, goal.k)
    return max(family_value(br, p) for _, br in goal.branches())


def branch_values(goal: CountedFamily, p: float) -> list[tuple[int, float]]:
    return [(marker, family_value(br, p)) for marker, br in goal.branches()]


def _xlogy(x: float, y: float) -> float:
    if x == 0:
        return 0.0
    return -math.inf if y == 0 else x * math.log(y)


def family_log_value(goal: CountedFamily, p: float) -> float:
    """Natural log of :func:`family_value`, without underflow for single words."""
    if goal.tag is Family.PHI_W:
        ones = sum(goal.w)
        return _xlogy(ones, p) + _xlogy(len(goal.w) - ones, 1 - p)
    if goal.tag is Family.RHO:
        return _log_pmf(p, goal.n, goal.r)
    if goal.tag in (Family.XI_K, Family.XI_RS):
        return max(family_log_value(br, p) for _, br in goal.branches())
    v = family_value(goal, p)
    return math.log(v) if v > 0 else -math.inf


def branch_log_values(goal: CountedFamily, p: float) -> list[tuple[int, float]]:
    return [(marker, family_log_value(br, p)) for marker, br in goal.branches()]


# ---------------------------------------------------------------- policies


class FiniteMemoryPolicy(Protocol):
    def initial_memory(self) -> Any: ...
    def act(self, memory, s: int) -> np.ndarray: ...
    def update(self, memory, s: int, a: int, s_next: int) -> Any: ...


class ObservationPolicy(Protocol):
    def initial_memory(self) -> Any: ...
    def act(self, memory, o: int) -> np.ndarray: ...
    def update(self, memory, o: int, a: int) -> Any: ...


@dataclass(frozen=True, eq=False)
class MarkovObservationPolicy:
    """Observation-based policy that looks only at the latest observation."""

    table: np.ndarray

    def initial_memory(self):
        return None

    def act(self, memory, o):
        return self.table[o]

    def update(self, memory, o, a):
        return None

    def __call__(self, h: ObservationHistory) -> np.ndarray:
        return self.table[h.last]


@dataclass(frozen=True, eq=False)
class BlindPolicy:
    """Policy that ignores states and observations: first action, then a fixed distribution.

    Usable both as a :class:`FiniteMemoryPolicy` and as an
    :class:`ObservationPolicy`; ``first=None`` means the fixed distribution
    from the start.
    """

    then: np.ndarray
    first: np.ndarray | None = None

    @classmethod
    def uniform(cls, n_actions: int, first: int | None = None) -> "BlindPolicy":
        return cls(np.full(n_actions, 1.0 / n_actions), None if first is None else point_mass(first, n_actions))

    def initial_memory(self):
        return 0 if self.first is not None else 1

    def act(self, memory, _):
        return self.first if memory == 0 else self.then

    def update(self, memory, *_):
        return 1

    def __call__(self, h):
        return self.first if (len(h) == 0 and self.first is not None) else self.then


@dataclass(eq=False)
class MonitorMemoryPolicy:
    """Deterministic policy whose memory is the goal's joint monitor state."""

    monitor: JointMonitor
    choice: dict
    n_actions: int

    def initial_memory(self):
        return self.monitor.initial

    def act(self, memory, s):
        return point_mass(self.choice.get((s, memory), 0), self.n_actions)

    def update(self, memory, s, a, s_next):
        if memory in (ACCEPT, REJECT):
            return memory
        return self.monitor.step(memory, s, a)


def as_policy(obj, goal):
    """Coerce an agent, policy object or history callable into a finite-memory policy."""
    if hasattr(obj, "as_policy"):
        return obj.as_policy(goal)
    if hasattr(obj, "act") and hasattr(obj, "update"):
        return obj
    if callable(obj):
        return HistoryPolicy(obj)
    raise TypeError(f"cannot use {obj!r} as a policy")


@dataclass(frozen=True, eq=False)
class HistoryPolicy:
    """Wrap an arbitrary ``FiniteHistory -> distribution`` callable (memory = the history)."""

    fn: Callable

    def initial_memory(self):
        return None

    def act(self, memory, s):
        h = FiniteHistory((s,)) if memory is None else FiniteHistory(memory[0] + (s,), memory[1])
        return self.fn(h)

    def update(self, memory, s, a, s_next):
        states, actions = ((), ()) if memory is None else memory
        return (states + (s,), actions + (a,))


# ---------------------------------------------------------------- product chains


class SolverError(RuntimeError):
    pass


@dataclass
class ProductChain:
    """Transient product nodes plus absorbing ACCEPT / REJECT sinks.

    ``Q[i, j]`` is the transient-to-transient probability, ``accept[i]`` and
    ``reject[i]`` the one-step absorption probabilities.
    """

    nodes: list
    Q: sparse.csr_matrix
    accept: np.ndarray
    reject: np.ndarray
    start: int | None
    start_outcome: int | None = None

    def row_defect(self) -> float:
        if not self.nodes:
            return 0.0
        total = np.asarray(self.Q.sum(axis=1)).ravel() + self.accept + self.reject
        return float(np.abs(total - 1).max())

    def absorption(self) -> np.ndarray:
        """ACCEPT-absorption probability of every node (exact up to the LU solve)."""
        n = len(self.nodes)
        if n == 0:
            return np.zeros(0)
        can = self.accept > 0
        Qt = self.Q.T.tocsr()
        queue = deque(np.flatnonzero(can))
        while queue:
            j = queue.popleft()
            for i in Qt.indices[Qt.indptr[j] : Qt.indptr[j + 1]]:
                if not can[i]:
                    can[i] = True
                    queue.append(i)
        x = np.zeros(n)
        idx = np.flatnonzero(can)
        if idx.size:
            A = np.eye(idx.size) - self.Q[idx][:, idx].toarray()
            try:
                x[idx] = np.linalg.solve(A, self.accept[idx])
            except np.linalg.LinAlgError as e:
                raise SolverError("singular absorbing system") from e
        return np.clip(x, 0.0, 1.0)

    def value(self) -> float:
        if self.start is None:
            return 1.0 if self.start_outcome == ACCEPT else 0.0
        return float(self.absorption()[self.start])


def _explore(start, expand) -> ProductChain:
    """BFS over product nodes; ``expand(node)`` yields ``(prob, outcome)``."""
    if start in (ACCEPT, REJECT):
        return ProductChain([], sparse.csr_matrix((0, 0)), np.zeros(0), np.zeros(0), None, start)
    index = {start: 0}
    nodes = [start]
    rows, cols, vals = [], [], []
    acc, rej = [0.0], [0.0]
    i = 0
    while i < len(nodes):
        for prob, out in expand(nodes[i]):
            if out == ACCEPT:
                acc[i] += prob
            elif out == REJECT:
                rej[i] += prob
            else:
                j = index.get(out)
                if j is None:
                    j = index[out] = len(nodes)
                    nodes.append(out)
                    acc.append(0.0)
                    rej.append(0.0)
                rows.append(i)
                cols.append(j)
                vals.append(prob)
        i += 1
    n = len(nodes)
    Q = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return ProductChain(nodes, Q, np.array(acc), np.array(rej), 0)


def build_product_chain(world: World, policy: FiniteMemoryPolicy, goal: AnyGoal, s0: int) -> ProductChain:
    """Product of the world, a finite-memory policy and the goal's monitor."""
    base = world.base if isinstance(world, ObservableWorld) else world
    jm = JointMonitor(goal, base.n_states, base.n_actions)
    P = base.kernel
    succ = [[np.flatnonzero(P[s, a]) for a in base.actions] for s in base.states]

    def expand(node):
        s, mem, joint = node
        dist = policy.act(mem, s)
        for a in np.flatnonzero(dist):
            pa = float(dist[a])
            nxt = jm.step(joint, s, int(a))
            if nxt in (ACCEPT, REJECT):
                yield pa, nxt
                continue
            for t in succ[s][a]:
                yield pa * P[s, a, t], (int(t), policy.update(mem, s, int(a), int(t)), nxt)

    start = jm.initial if jm.initial in (ACCEPT, REJECT) else (s0, policy.initial_memory(), jm.initial)
    return _explore(start, expand)


def build_observation_chain(world: ObservableWorld, policy: ObservationPolicy, goal: AnyGoal, s0: int) -> ProductChain:
    """Joint (state, policy memory, monitor) chain with observations summed out per step."""
    base = world.base
    jm = JointMonitor(goal, base.n_states, base.n_actions)
    P, Om = base.kernel, world.obs_kernel
    succ = [[np.flatnonzero(P[s, a]) for a in base.actions] for s in base.states]

    def expand(node):
        s, mem, joint = node
        for o in np.flatnonzero(Om[s]):
            po = float(Om[s, o])
            dist = policy.act(mem, int(o))
            for a in np.flatnonzero(dist):
                w = po * float(dist[a])
                nxt = jm.step(joint, s, int(a))
                if nxt in (ACCEPT, REJECT):
                    yield w, nxt
                    continue
                mem2 = policy.update(mem, int(o), int(a))
                for t in succ[s][a]:
                    yield w * P[s, a, t], (int(t), mem2, nxt)

    start = jm.initial if jm.initial in (ACCEPT, REJECT) else (s0, policy.initial_memory(), jm.initial)
    return _explore(start, expand)


def exact_success_prob(world: World, policy, goal: AnyGoal, s0: int) -> SuccessProbability:
    """``Pr(goal | policy, s0)`` by solving the absorbing product chain."""
    chain = build_product_chain(world, as_policy(policy, goal), goal, s0)
    return SuccessProbability(chain.value(), Method.LINEAR_SOLVE)


# ---------------------------------------------------------------- optimal values


@dataclass
class _Game:
    nodes: list
    acc: np.ndarray  # (A, N) one-step accept probability
    T: list  # per action csr (N, N)
    allowed: np.ndarray  # (A, N) whether the action can be taken (always True here)


def _build_game(world: World, jm: JointMonitor, s0: int) -> _Game:
    P = world.kernel
    nA = world.n_actions
    index = {(s0, jm.initial): 0}
    nodes = [(s0, jm.initial)]
    acc = [[0.0] for _ in range(nA)]
    trips = [([], [], []) for _ in range(nA)]
    i = 0
    while i < len(nodes):
        s, joint = nodes[i]
        for a in range(nA):
            nxt = jm.step(joint, s, a)
            if nxt == ACCEPT:
                acc[a][i] = 1.0
                continue
            if nxt == REJECT:
                continue
            for t in np.flatnonzero(P[s, a]):
                key = (int(t), nxt)
                j = index.get(key)
                if j is None:
                    j = index[key] = len(nodes)
                    nodes.append(key)
                    for lst in acc:
                        lst.append(0.0)
                trips[a][0].append(i)
                trips[a][1].append(j)
                trips[a][2].append(P[s, a, t])
        i += 1
    n = len(nodes)
    T = [sparse.csr_matrix((v, (r, c)), shape=(n, n)) for r, c, v in trips]
    return _Game(nodes, np.array(acc), T, np.ones((nA, n), bool))


def _q_values(game: _Game, V: np.ndarray) -> np.ndarray:
    return np.stack([game.acc[a] + game.T[a] @ V for a in range(len(game.T))])


def _progress_policy(game: _Game, V: np.ndarray, tol: float) -> np.ndarray:
    """Among value-preserving actions pick one that moves toward acceptance."""
    Qv = _q_values(game, V)
    good = Qv >= V[None, :] - tol
    n = len(game.nodes)
    choice = np.full(n, -1)
    rank = np.full(n, np.inf)
    for a in range(Qv.shape[0]):
        hit = good[a] & (game.acc[a] > 0) & (choice < 0)
        choice[hit] = a
        rank[hit] = 0
    r = 0
    while True:
        r += 1
        ranked = np.isfinite(rank)
        newly = np.zeros(n, bool)
        for a in range(Qv.shape[0]):
            reach = (game.T[a] @ ranked.astype(float)) > 0
            hit = good[a] & reach & (choice < 0) & ~newly
            choice[hit] = a
            newly |= hit
        if not newly.any():
            break
        rank[newly] = r
    choice[choice < 0] = 0
    return choice


def _evaluate(game: _Game, choice: np.ndarray) -> np.ndarray:
    n = len(game.nodes)
    nA = len(game.T)
    rows = [game.T[a][np.flatnonzero(choice == a)] for a in range(nA)]
    # reassemble Q row by row in node order
    Q = sparse.lil_matrix((n, n))
    acc = np.zeros(n)
    for a in range(nA):
        idx = np.flatnonzero(choice == a)
        if idx.size:
            Q[idx] = rows[a]
            acc[idx] = game.acc[a][idx]
    chain = ProductChain(game.nodes, Q.tocsr(), acc, 1 - acc - np.asarray(Q.sum(axis=1)).ravel(), 0)
    return chain.absorption()


def optimal_success_prob(
    world: World, goal: AnyGoal, s0: int, tol: float = 1e-12, max_iter: int = 1_000_000
) -> tuple[SuccessProbability, MonitorMemoryPolicy]:
    """``max_pi Pr(goal | pi, s0)`` with a deterministic monitor-memory witness.

    Plain value iteration runs until the sup-norm change drops below ``tol``;
    near-0/1 values are snapped, a progress-respecting greedy witness is
    extracted, and policy iteration (exact linear solves) polishes it until no
    action improves any node by more than ``tol``. The returned value is the
    witness's exact success probability.
    """
    base = world.base if isinstance(world, ObservableWorld) else world
    jm = JointMonitor(goal, base.n_states, base.n_actions)
    if jm.initial in (ACCEPT, REJECT):
        val = 1.0 if jm.initial == ACCEPT else 0.0
        return SuccessProbability(val, Method.VALUE_ITERATION), MonitorMemoryPolicy(jm, {}, base.n_actions)
    game = _build_game(base, jm, s0)
    V = np.zeros(len(game.nodes))
    for _ in range(max_iter):
        V_new = _q_values(game, V).max(axis=0)
        delta = np.abs(V_new - V).max()
        V = V_new
        if delta < tol:
            break
    V[V < 1e-9] = 0.0
    V[V > 1 - 1e-9] = 1.0
    choice = _progress_policy(game, V, 1e-9)
    for _ in range(100):
        V = _evaluate(game, choice)
        Qv = _q_values(game, V)
        best = Qv.max(axis=0)
        improve = best > V + tol
        if not improve.any():
            break
        choice = np.where(improve, Qv.argmax(axis=0), choice)
        choice = np.where(improve, choice, _progress_policy(game, V, tol))
    table = {node: int(c) for node, c in zip(game.nodes, choice)}
    return SuccessProbability(float(V[0]), Method.VALUE_ITERATION), MonitorMemoryPolicy(jm, table, base.n_actions)


# ---------------------------------------------------------------- Monte Carlo


def default_horizon(world: World, goal: AnyGoal) -> int:
    return 50 * world.n_states * (depth(goal) + 1)


def monte_carlo_prob(
    world: World,
    policy,
    goal: AnyGoal,
    s0: int,
    horizon: int | None = None,
    samples: int = 10_000,
    seed: int = 0,
) -> SuccessProbability:
    """Simulate ``samples`` runs; PENDING-at-horizon mass is reported, not dropped."""
    base = world.base if isinstance(world, ObservableWorld) else world
    horizon = default_horizon(base, goal) if horizon is None else horizon
    pol = as_policy(policy, goal)
    jm = JointMonitor(goal, base.n_states, base.n_actions)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(base.kernel, axis=2)
    accepted = pending = 0
    for _ in range(samples):
        joint, s, mem = jm.initial, s0, pol.initial_memory()
        t = 0
        while joint not in (ACCEPT, REJECT) and t < horizon:
            a = _sample(pol.act(mem, s), rng)
            joint = jm.step(joint, s, a)
            s_next = min(int(np.searchsorted(cum[s, a], rng.random(), side="right")), base.n_states - 1)
            while base.kernel[s, a, s_next] == 0:
                s_next -= 1
            mem = pol.update(mem, s, a, s_next)
            s = s_next
            t += 1
        if joint == ACCEPT:
            accepted += 1
        elif joint != REJECT:
            pending += 1
    p = accepted / samples
    return SuccessProbability(
        p, Method.MONTE_CARLO, half_width=2.5758 * math.sqrt(max(p * (1 - p), 1e-300) / samples),
        pending=pending / samples, samples=samples,
    )


def monte_carlo_observation(
    world: ObservableWorld, policy, goal: AnyGoal, s0: int, horizon: int | None = None, samples: int = 10_000, seed: int = 0
) -> SuccessProbability:
    """Monte Carlo for an observation-history callable ``ObservationHistory -> distribution``."""
    base = world.base
    horizon = default_horizon(base, goal) if horizon is None else horizon
    jm = JointMonitor(goal, base.n_states, base.n_actions)
    rng = np.random.default_rng(seed)
    accepted = pending = 0
    for _ in range(samples):
        joint, s = jm.initial, s0
        obs, acts = (_sample(world.obs_kernel[s], rng),), ()
        t = 0
        while joint not in (ACCEPT, REJECT) and t < horizon:
            a = _sample(policy(ObservationHistory(obs, acts)), rng)
            joint = jm.step(joint, s, a)
            s = _sample(base.kernel[s, a], rng)
            obs, acts = obs + (_sample(world.obs_kernel[s], rng),), acts + (a,)
            t += 1
        if joint == ACCEPT:
            accepted += 1
        elif joint != REJECT:
            pending += 1
    p = accepted / samples
    return SuccessProbability(
        p, Method.MONTE_CARLO, half_width=2.5758 * math.sqrt(max(p * (1 - p), 1e-300) / samples),
        pending=pending / samples, samples=samples,
    )


# ---------------------------------------------------------------- partial observability


def pomdp_success_prob_obs_independent(
    world: ObservableWorld, policy: BlindPolicy, goal: AnyGoal, s0: int, crosscheck: bool = True
) -> SuccessProbability:
    """Success probability of a policy that ignores observations.

    The value comes from the underlying fully observable world; with
    ``crosscheck`` the joint (state, observation) chain is solved as well and
    the two must agree to 1e-12.
    """
    value = build_product_chain(world.base, policy, goal, s0).value()
    joint = None
    if crosscheck:
        joint = build_observation_chain(world, policy, goal, s0).value()
        if abs(joint - value) > 1e-12:
            raise SolverError(f"observation kernel changed an observation-independent value: {value} vs {joint}")
    return SuccessProbability(value, Method.LINEAR_SOLVE, crosscheck=joint)


def pomdp_policy_success_prob(
    world: ObservableWorld, policy, goal: AnyGoal, s0: int, samples: int = 20_000, seed: int = 0
) -> SuccessProbability:
    """Exact for finite-memory observation policies, Monte Carlo for bare callables."""
    if hasattr(policy, "act") and hasattr(policy, "update"):
        return SuccessProbability(build_observation_chain(world, policy, goal, s0).value(), Method.LINEAR_SOLVE)
    return monte_carlo_observation(world, policy, goal, s0, samples=samples, seed=seed)


def verdict_of(goal: AnyGoal, h: FiniteHistory) -> Verdict:
    return satisfies_prefix(goal, h.pairs())
