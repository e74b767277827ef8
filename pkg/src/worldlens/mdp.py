"""Finite controlled MDPs, histories, simulation and reachability synthesis.

States, actions and observations are dense integer indices; optional name
tables only matter for I/O. Kernels are stored as read-only numpy arrays:
``kernel[s, a, s']`` and ``obs_kernel[s, o]``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

ROW_TOL = 1e-12


class WorldError(ValueError):
    """Malformed world data or an identifier outside the world."""


class NotCommunicatingError(WorldError):
    pass


def _normalize_rows(arr: np.ndarray, what: str, check: bool) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    if check:
        if np.any(arr < 0) or np.any(arr > 1 + ROW_TOL):
            raise WorldError(f"{what}: entries must lie in [0, 1]")
        sums = arr.sum(axis=-1)
        bad = np.abs(sums - 1.0) > ROW_TOL
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise WorldError(f"{what}: row {idx} sums to {sums[idx]!r}")
        # rows already exact up to rounding are kept, so written files reload bit for bit
        fix = np.abs(sums - 1.0) > 8 * np.finfo(float).eps
        arr = np.where(fix[..., None], arr / sums[..., None], arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class World:
    """A finite cMDP ``(S, A, P)``.

    ``kernel`` has shape ``(|S|, |A|, |S|)``. With ``check=True`` (default)
    rows whose sum is off by at most 1e-12 are renormalized and anything
    worse raises :class:`WorldError`; ``check=False`` keeps the data as-is so
    that :func:`validate_world` can report the defects.
    """

    kernel: np.ndarray
    state_names: tuple[str, ...] = ()
    action_names: tuple[str, ...] = ()
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != 3 or k.shape[0] != k.shape[2] or k.shape[0] == 0 or k.shape[1] == 0:
            raise WorldError(f"kernel must have shape (S, A, S) with S, A > 0, got {k.shape}")
        object.__setattr__(self, "kernel", _normalize_rows(k, "transition kernel", self.check))
        nS, nA = k.shape[0], k.shape[1]
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(f"s{i}" for i in range(nS)))
        if not self.action_names:
            object.__setattr__(self, "action_names", tuple(f"a{i}" for i in range(nA)))
        if len(self.state_names) != nS or len(self.action_names) != nA:
            raise WorldError("name tables do not match kernel shape")

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]

    @property
    def states(self) -> range:
        return range(self.n_states)

    @property
    def actions(self) -> range:
        return range(self.n_actions)

    def prob(self, s: int, a: int, s_next: int) -> float:
        return float(self.kernel[s, a, s_next])

    def state_index(self, name: str | int) -> int:
        return _lookup(name, self.state_names, "state")

    def action_index(self, name: str | int) -> int:
        return _lookup(name, self.action_names, "action")

    def check_state(self, s: int) -> int:
        if not (isinstance(s, (int, np.integer)) and 0 <= s < self.n_states):
            raise WorldError(f"unknown state {s!r}")
        return int(s)

    def check_action(self, a: int) -> int:
        if not (isinstance(a, (int, np.integer)) and 0 <= a < self.n_actions):
            raise WorldError(f"unknown action {a!r}")
        return int(a)


@dataclass(frozen=True, eq=False)
class ObservableWorld:
    """A partially observable cMDP: a :class:`World` plus ``obs_kernel[s, o]``."""

    base: World
    obs_kernel: np.ndarray
    observation_names: tuple[str, ...] = ()
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        o = np.asarray(self.obs_kernel, dtype=float)
        if o.ndim != 2 or o.shape[0] != self.base.n_states or o.shape[1] == 0:
            raise WorldError(f"observation kernel must have shape (S, O), got {o.shape}")
        object.__setattr__(self, "obs_kernel", _normalize_rows(o, "observation kernel", self.check))
        if not self.observation_names:
            object.__setattr__(self, "observation_names", tuple(f"o{i}" for i in range(o.shape[1])))
        if len(self.observation_names) != o.shape[1]:
            raise WorldError("observation names do not match kernel shape")

    @property
    def n_observations(self) -> int:
        return self.obs_kernel.shape[1]

    @property
    def kernel(self) -> np.ndarray:
        return self.base.kernel

    @property
    def n_states(self) -> int:
        return self.base.n_states

    @property
    def n_actions(self) -> int:
        return self.base.n_actions

    def observation_index(self, name: str | int) -> int:
        return _lookup(name, self.observation_names, "observation")


def _lookup(name, table, what) -> int:
    if isinstance(name, (int, np.integer)):
        if 0 <= name < len(table):
            return int(name)
        raise WorldError(f"unknown {what} index {name}")
    try:
        return table.index(name)
    except ValueError:
        if name.isdigit() and int(name) < len(table):
            return int(name)
        raise WorldError(f"unknown {what} {name!r}") from None


# ---------------------------------------------------------------- histories


@dataclass(frozen=True)
class FiniteHistory:
    """``s0 a0 s1 ... sk``: one more state than actions."""

    states: tuple[int, ...]
    actions: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise WorldError("a finite history starts and ends with a state")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def last(self) -> int:
        return self.states[-1]

    def prefix(self, i: int) -> "FiniteHistory":
        return FiniteHistory(self.states[: i + 1], self.actions[:i])

    def extend(self, a: int, s_next: int) -> "FiniteHistory":
        return FiniteHistory(self.states + (s_next,), self.actions + (a,))

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.states, self.actions))


@dataclass(frozen=True)
class ObservationHistory:
    """``o0 a0 o1 ... ok`` as seen by an observation-based policy."""

    observations: tuple[int, ...]
    actions: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.observations) != len(self.actions) + 1:
            raise WorldError("an observation history starts and ends with an observation")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def last(self) -> int:
        return self.observations[-1]


# ---------------------------------------------------------------- policies


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Markov policy given as a ``(|S|, |A|)`` matrix of action distributions."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _normalize_rows(self.table, "policy", True))

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "StationaryPolicy":
        table = np.zeros((len(actions), n_actions))
        table[np.arange(len(actions)), list(actions)] = 1.0
        return cls(table)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "StationaryPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    def __call__(self, h: FiniteHistory) -> np.ndarray:
        return self.table[h.last]

    def action(self, s: int) -> int:
        """The chosen action of a deterministic policy."""
        return int(np.argmax(self.table[s]))

    # finite-memory protocol (memoryless)
    def initial_memory(self):
        return None

    def act(self, memory, s: int) -> np.ndarray:
        return self.table[s]

    def update(self, memory, s: int, a: int, s_next: int):
        return None


@dataclass(frozen=True, eq=False)
class FirstActionThen:
    """Play ``first`` at time 0, then follow a stationary policy forever."""

    first: np.ndarray
    then: StationaryPolicy

    def __call__(self, h: FiniteHistory) -> np.ndarray:
        return self.first if len(h) == 0 else self.then.table[h.last]

    def initial_memory(self):
        return 0

    def act(self, memory, s: int) -> np.ndarray:
        return self.first if memory == 0 else self.then.table[s]

    def update(self, memory, s, a, s_next):
        return 1


def point_mass(a: int, n_actions: int) -> np.ndarray:
    d = np.zeros(n_actions)
    d[a] = 1.0
    d.setflags(write=False)
    return d


# ---------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    row_defects: list[tuple[str, tuple[int, ...], float]]
    strongly_connected: bool
    n_states: int
    n_actions: int

    @property
    def communicating(self) -> bool:
        return self.strongly_connected

    @property
    def valid(self) -> bool:
        return not self.row_defects

    @property
    def ok(self) -> bool:
        return self.valid and self.communicating

    def lines(self) -> list[str]:
        out = [f"states {self.n_states}", f"actions {self.n_actions}"]
        for what, idx, total in self.row_defects:
            out.append(f"defect {what} row {idx} sums to {total:.17g}")
        out.append(f"communicating {str(self.communicating).lower()}")
        out.append("valid" if self.ok else "invalid")
        return out


def positive_graph(world: World) -> np.ndarray:
    """Boolean adjacency ``s -> s'`` iff some action moves there with positive probability."""
    return (world.kernel > 0).any(axis=1)


def strongly_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]

    def reach(m):
        seen = np.zeros(n, bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(m[u] & ~seen):
                seen[v] = True
                queue.append(v)
        return seen.all()

    return reach(adj) and reach(adj.T)


def validate_world(world: World | ObservableWorld) -> ValidationReport:
    """Report row-normalization defects and strong connectivity; never raises."""
    base = world.base if isinstance(world, ObservableWorld) else world
    defects = []
    sums = base.kernel.sum(axis=2)
    for s, a in np.argwhere(np.abs(sums - 1) > ROW_TOL):
        defects.append(("transition", (int(s), int(a)), float(sums[s, a])))
    if np.any(base.kernel < 0):
        defects.append(("transition", (-1,), float(base.kernel.min())))
    if isinstance(world, ObservableWorld):
        osums = world.obs_kernel.sum(axis=1)
        for s in np.flatnonzero(np.abs(osums - 1) > ROW_TOL):
            defects.append(("observation", (int(s),), float(osums[s])))
    return ValidationReport(defects, strongly_connected(positive_graph(base)), base.n_states, base.n_actions)


def is_communicating(world: World | ObservableWorld) -> bool:
    base = world.base if isinstance(world, ObservableWorld) else world
    return strongly_connected(positive_graph(base))


# ---------------------------------------------------------------- sampling


def _sample(row: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(row), u, side="right"))
    # cumsum can end a hair below 1.0
    if idx >= len(row):
        idx = int(np.flatnonzero(row)[-1])
    return idx


def step(world: World, s: int, a: int, rng: np.random.Generator) -> int:
    """Draw ``s' ~ P(. | s, a)``; consumes exactly one uniform from ``rng``."""
    world.check_state(s)
    world.check_action(a)
    return _sample(world.kernel[s, a], rng)


def observe(world: ObservableWorld, s: int, rng: np.random.Generator) -> int:
    """Draw ``o ~ Omega(. | s)``; consumes exactly one uniform from ``rng``."""
    world.base.check_state(s)
    return _sample(world.obs_kernel[s], rng)


def sample_action(dist: np.ndarray, rng: np.random.Generator) -> int:
    return _sample(dist, rng)


def worker_rng(root_seed: int, worker: int) -> np.random.Generator:
    """Independent stream for a parallel worker: root seed XOR worker index."""
    return np.random.default_rng(int(root_seed) ^ int(worker))


# ---------------------------------------------------------------- history measure


def history_probability(
    world: World,
    policy: Callable[[FiniteHistory], np.ndarray],
    h: FiniteHistory,
    start: int | None = None,
) -> float:
    """Probability of the finite history ``h`` under ``policy`` from ``start``.

    Product over steps of ``Pr(policy(h_i) = a_i) * P(s_{i+1} | s_i, a_i)``;
    zero when ``h`` does not begin at ``start``.
    """
    for s in h.states:
        world.check_state(s)
    for a in h.actions:
        world.check_action(a)
    if start is not None and h.states[0] != start:
        return 0.0
    prob = 1.0
    for i, a in enumerate(h.actions):
        prob *= float(policy(h.prefix(i))[a]) * world.kernel[h.states[i], a, h.states[i + 1]]
        if prob == 0.0:
            return 0.0
    return float(prob)


# ---------------------------------------------------------------- reachability


def almost_sure_winning_region(world: World, target_states: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    """Greatest fixpoint of states that reach ``target_states`` with probability 1.

    Returns ``(win, allowed)`` where ``allowed[s, a]`` marks actions whose whole
    positive support stays inside ``win``.
    """
    P = world.kernel > 0
    targets = np.zeros(world.n_states, bool)
    targets[list(target_states)] = True
    win = np.ones(world.n_states, bool)
    while True:
        allowed = ~(P & ~win[None, None, :]).any(axis=2) & win[:, None]
        reach = _backward_reach(P, allowed, targets & win)
        if np.array_equal(reach, win):
            return win, allowed
        win = reach


def _backward_reach(P, allowed, targets) -> np.ndarray:
    reach = targets.copy()
    changed = True
    while changed:
        hits = (P & reach[None, None, :]).any(axis=2) & allowed
        new = reach | hits.any(axis=1)
        changed = not np.array_equal(new, reach)
        reach = new
    return reach


def almost_sure_reach_policy(world: World, target: Iterable[tuple[int, int]]) -> StationaryPolicy:
    """Deterministic stationary policy hitting some ``(s, a)`` in ``target`` a.s.

    At a target state the (lowest) target action is played. Elsewhere the
    policy takes an action that keeps the run inside the almost-sure winning
    region and has a successor one step closer (in the positive graph
    restricted to such actions) to the targets; ties go to the lowest action.
    """
    target = sorted(set((int(s), int(a)) for s, a in target))
    if not target:
        raise WorldError("target must be non-empty")
    for s, a in target:
        world.check_state(s)
        world.check_action(a)
    if not is_communicating(world):
        raise NotCommunicatingError("almost-sure reachability requires a communicating world")
    target_action = {}
    for s, a in target:
        target_action.setdefault(s, a)
    win, allowed = almost_sure_winning_region(world, target_action)
    assert win.all()
    P = world.kernel > 0
    dist = np.full(world.n_states, np.inf)
    choice = np.full(world.n_states, -1)
    frontier = []
    for s, a in target_action.items():
        dist[s] = 0
        choice[s] = a
        frontier.append(s)
    d = 0
    while frontier:
        d += 1
        nxt = []
        reached = np.zeros(world.n_states, bool)
        reached[frontier] = True
        for s in range(world.n_states):
            if np.isfinite(dist[s]):
                continue
            for a in range(world.n_actions):
                if allowed[s, a] and (P[s, a] & reached).any():
                    dist[s] = d
                    choice[s] = a
                    nxt.append(s)
                    break
        frontier = nxt
    assert (choice >= 0).all()
    return StationaryPolicy.deterministic(choice.tolist(), world.n_actions)


def hitting_probabilities(chain: np.ndarray, targets: Iterable[int]) -> np.ndarray:
    """Probability of ever hitting ``targets`` for a Markov chain matrix.

    Minimal non-negative solution: states that cannot reach the targets get 0,
    the rest solve ``(I - Q) h = b`` directly.
    """
    n = chain.shape[0]
    tgt = np.zeros(n, bool)
    tgt[list(targets)] = True
    can = tgt.copy()
    pos = chain > 0
    changed = True
    while changed:
        new = can | (pos & can[None, :]).any(axis=1)
        changed = not np.array_equal(new, can)
        can = new
    h = np.zeros(n)
    h[tgt] = 1.0
    rest = np.flatnonzero(can & ~tgt)
    if rest.size:
        Q = chain[np.ix_(rest, rest)]
        b = chain[np.ix_(rest, np.flatnonzero(tgt))].sum(axis=1)
        h[rest] = np.linalg.solve(np.eye(rest.size) - Q, b)
    return h


def induced_chain(world: World, policy: StationaryPolicy) -> np.ndarray:
    return np.einsum("sa,sat->st", policy.table, world.kernel)
