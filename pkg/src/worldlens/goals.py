"""Goal fragment: basic / sequential / disjunctive goals and their monitors.

A basic goal constrains one state-action pair: ``NOW`` the current pair,
``NEXT`` the following pair, ``EV`` some pair from here on (the first such
pair becomes the new "current" pair for the rest of the sequence). A
sequential goal chains basic goals; a goal is a finite disjunction of
sequential goals. The empty disjunction is the always-false goal.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union


class Op(enum.IntEnum):
    NOW = 0
    NEXT = 1
    EV = 2


class Verdict(enum.Enum):
    PENDING = "PENDING"
    ACCEPTED = "ACCEPTED"
    REJECTED = "REJECTED"


# ---------------------------------------------------------------- predicates


@dataclass(frozen=True)
class Lit:
    """``S=x``, ``S!=x``, ``A={x,y}`` ...: membership of the state or action."""

    var: str
    values: frozenset
    negated: bool = False

    def __post_init__(self):
        if self.var not in ("S", "A"):
            raise ValueError("literal variable must be 'S' or 'A'")
        object.__setattr__(self, "values", frozenset(int(v) for v in self.values))
        if not self.values:
            raise ValueError("a literal needs at least one value")

    def holds(self, s: int, a: int) -> bool:
        return ((s if self.var == "S" else a) in self.values) != self.negated


@dataclass(frozen=True)
class PairSet:
    pairs: frozenset

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset((int(s), int(a)) for s, a in self.pairs))

    def holds(self, s: int, a: int) -> bool:
        return (s, a) in self.pairs


@dataclass(frozen=True)
class Pred:
    """Conjunction of terms; the empty conjunction is all of ``S x A``."""

    terms: tuple = ()

    def __contains__(self, pair) -> bool:
        s, a = pair
        return all(t.holds(s, a) for t in self.terms)

    def pairs(self, n_states: int, n_actions: int) -> frozenset:
        return frozenset((s, a) for s in range(n_states) for a in range(n_actions) if (s, a) in self)


def S_is(*states: int) -> Lit:
    return Lit("S", frozenset(states))


def S_not(*states: int) -> Lit:
    return Lit("S", frozenset(states), True)


def A_is(*actions: int) -> Lit:
    return Lit("A", frozenset(actions))


def A_not(*actions: int) -> Lit:
    return Lit("A", frozenset(actions), True)


def pred(*terms) -> Pred:
    return Pred(tuple(terms))


# ---------------------------------------------------------------- goals


@dataclass(frozen=True)
class BasicGoal:
    op: Op
    pred: Pred


def NOW(*terms) -> BasicGoal:
    return BasicGoal(Op.NOW, Pred(tuple(terms)))


def NEXT(*terms) -> BasicGoal:
    return BasicGoal(Op.NEXT, Pred(tuple(terms)))


def EV(*terms) -> BasicGoal:
    return BasicGoal(Op.EV, Pred(tuple(terms)))


@dataclass(frozen=True)
class SequentialGoal:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("a sequential goal needs at least one basic goal")

    def __len__(self):
        return len(self.parts)


def seq(*parts: BasicGoal) -> SequentialGoal:
    return SequentialGoal(tuple(parts))


@dataclass(frozen=True)
class Goal:
    disjuncts: tuple

    def __post_init__(self):
        object.__setattr__(self, "disjuncts", tuple(self.disjuncts))

    @classmethod
    def of(cls, *items: SequentialGoal | BasicGoal) -> "Goal":
        return cls(tuple(i if isinstance(i, SequentialGoal) else SequentialGoal((i,)) for i in items))

    @property
    def is_false(self) -> bool:
        return not self.disjuncts


FALSE = Goal(())


# ---------------------------------------------------------------- counted families


class Family(enum.Enum):
    PHI_W = "PHI_W"
    RHO = "RHO"
    PSI_LE = "PSI_LE"
    CHI_GT = "CHI_GT"
    XI_K = "XI_K"
    XI_RS = "XI_RS"


MATERIALIZE_LIMIT = 12


@dataclass(frozen=True)
class CountedFamily:
    """Symbolic goal over ``n`` visits to ``(s, a)`` watching for ``s'``.

    ``triple`` is ``(s, a, s')``. Single-branch families (PHI_W, RHO, PSI_LE,
    CHI_GT) open with ``NOW[A=b]``. ``XI_K`` is ``PSI_LE`` under marker
    ``a_marker`` or ``CHI_GT`` under ``b``; ``XI_RS`` is the all-ones word of
    length ``r`` under ``a_marker`` or the all-zeros word of length ``s`` under
    ``b``, with the bits swapped when ``reflect`` is set.
    """

    tag: Family
    triple: tuple
    b: int
    n: int = 0
    a_marker: int | None = None
    r: int = 0
    k: int = 0
    s: int = 0
    w: tuple = ()
    reflect: bool = False

    # ---- structure
    def branches(self) -> list[tuple[int, "CountedFamily"]]:
        """``(first action, single-branch family)`` pairs making up the disjunction."""
        if self.tag is Family.XI_K:
            return [
                (self.a_marker, CountedFamily(Family.PSI_LE, self.triple, self.a_marker, self.n, k=self.k)),
                (self.b, CountedFamily(Family.CHI_GT, self.triple, self.b, self.n, k=self.k)),
            ]
        if self.tag is Family.XI_RS:
            one, zero = (0, 1) if self.reflect else (1, 0)
            return [
                (self.a_marker, CountedFamily(Family.PHI_W, self.triple, self.a_marker, self.r, w=(one,) * self.r)),
                (self.b, CountedFamily(Family.PHI_W, self.triple, self.b, self.s, w=(zero,) * self.s)),
            ]
        return [(self.b, self)]

    def words(self) -> Iterable[tuple[int, ...]]:
        """Bit words of a single-branch family, in increasing weight then lexicographic order."""
        n = self.n
        if self.tag is Family.PHI_W:
            yield self.w
            return
        if self.tag is Family.RHO:
            weights = [self.r]
        elif self.tag is Family.PSI_LE:
            weights = range(0, self.k + 1)
        elif self.tag is Family.CHI_GT:
            weights = range(self.k + 1, n + 1)
        else:
            raise ValueError(f"{self.tag} has two branches; use branches()")
        for r in weights:
            for ones in itertools.combinations(range(n), r):
                w = [0] * n
                for i in ones:
                    w[i] = 1
                yield tuple(w)

    @property
    def params(self) -> tuple:
        return (self.tag.value, self.triple, self.a_marker, self.b, self.n, self.r, self.k, self.s, self.w, self.reflect)


def make_family(
    tag: Family | str,
    triple: Sequence[int],
    *,
    b: int,
    a: int | None = None,
    n: int = 0,
    r: int = 0,
    k: int = 0,
    s: int = 0,
    w: Sequence[int] = (),
    reflect: bool = False,
    n_actions: int | None = None,
) -> CountedFamily:
    """Build and range-check a counted family."""
    tag = Family(tag)
    triple = tuple(int(x) for x in triple)
    if len(triple) != 3:
        raise ValueError("triple must be (s, a, s')")
    if tag in (Family.XI_K, Family.XI_RS):
        if n_actions is not None and n_actions < 2:
            raise ValueError("dichotomy families need at least two actions")
        if a is None or a == b:
            raise ValueError("dichotomy families need two distinct marker actions")
    if tag is Family.PHI_W:
        w = tuple(int(x) for x in w)
        if any(x not in (0, 1) for x in w):
            raise ValueError("w must be a bit word")
        return CountedFamily(tag, triple, b, len(w), w=w)
    if n < 0:
        raise ValueError("n must be non-negative")
    if tag is Family.RHO:
        if not 0 <= r <= n:
            raise ValueError(f"r={r} outside [0, {n}]")
        return CountedFamily(tag, triple, b, n, r=r)
    if tag in (Family.PSI_LE, Family.CHI_GT, Family.XI_K):
        if not -1 <= k <= n:
            raise ValueError(f"k={k} outside [-1, {n}]")
        return CountedFamily(tag, triple, b, n, a_marker=a, k=k)
    if tag is Family.XI_RS:
        if r < 0 or s < 0:
            raise ValueError("r and s must be non-negative")
        return CountedFamily(tag, triple, b, max(r, s), a_marker=a, r=r, s=s, reflect=reflect)
    raise ValueError(tag)


def phi_word(triple, b: int, w: Sequence[int]) -> SequentialGoal:
    """``<NOW[A=b], EV[S=s,A=a], NEXT[S(!)=s'], ...>`` for the bit word ``w``."""
    s, a, t = triple
    visit = EV(S_is(s), A_is(a))
    parts = [NOW(A_is(b))]
    for bit in w:
        parts.append(visit)
        parts.append(NEXT(S_is(t)) if bit else NEXT(S_not(t)))
    return SequentialGoal(tuple(parts))


def materialize(goal: "AnyGoal", limit: int = MATERIALIZE_LIMIT) -> Goal:
    """Explicit disjunction for a counted family (``n`` up to ``limit``)."""
    if isinstance(goal, Goal):
        return goal
    if goal.tag is not Family.XI_RS and goal.n > limit:
        raise ValueError(f"refusing to materialize a family with n={goal.n} > {limit}")
    out = []
    for marker, branch in goal.branches():
        out.extend(phi_word(goal.triple, marker, w) for w in branch.words())
    return Goal(tuple(out))


AnyGoal = Union[Goal, CountedFamily]


def depth(goal: AnyGoal | SequentialGoal | BasicGoal) -> int:
    if isinstance(goal, BasicGoal):
        return 1
    if isinstance(goal, SequentialGoal):
        return len(goal.parts)
    if isinstance(goal, Goal):
        return max((len(d.parts) for d in goal.disjuncts), default=0)
    if goal.tag is Family.XI_RS:
        return 2 * max(goal.r, goal.s) + 1
    return 2 * goal.n + 1 if width(goal) else 0


def width(goal: AnyGoal | SequentialGoal) -> int:
    if isinstance(goal, SequentialGoal):
        return 1
    if isinstance(goal, Goal):
        return len(goal.disjuncts)
    n = goal.n
    if goal.tag is Family.PHI_W:
        return 1
    if goal.tag is Family.RHO:
        return math.comb(n, goal.r)
    if goal.tag is Family.PSI_LE:
        return sum(math.comb(n, r) for r in range(goal.k + 1))
    if goal.tag is Family.CHI_GT:
        return sum(math.comb(n, r) for r in range(goal.k + 1, n + 1))
    if goal.tag is Family.XI_K:
        return sum(width(br) for _, br in goal.branches())
    return 2


# ---------------------------------------------------------------- monitors

ACCEPT = -1
REJECT = -2


def advance(parts: Sequence, code: int, s: int, a: int) -> int:
    """Advance one sequential-goal monitor over the pair ``(s, a)``.

    ``parts`` is a sequence of ``(op, V)`` with ``(s, a) in V`` meaningful.
    ``code = 2 * position + deferred`` where ``deferred`` marks a ``NEXT``
    goal at ``position`` whose check falls on this pair. Returns the new code,
    or :data:`ACCEPT` / :data:`REJECT`.
    """
    pos, deferred = divmod(code, 2)
    n = len(parts)
    while pos < n:
        op, V = parts[pos]
        if deferred or op == Op.NOW:
            if (s, a) not in V:
                return REJECT
            pos += 1
            deferred = 0
        elif op == Op.EV:
            if (s, a) not in V:
                return 2 * pos
            pos += 1
        else:
            return 2 * pos + 1
    return ACCEPT


def compile_parts(goal: SequentialGoal, n_states: int | None = None, n_actions: int | None = None) -> tuple:
    """``(op, V)`` tuples; with sizes given ``V`` becomes an explicit pair set."""
    if n_states is None:
        return tuple((g.op, g.pred) for g in goal.parts)
    return tuple((g.op, g.pred.pairs(n_states, n_actions)) for g in goal.parts)


@dataclass(frozen=True)
class MonitorState:
    """Progress of one sequential goal on a finite prefix."""

    goal: SequentialGoal
    code: int = 0
    verdict: Verdict = Verdict.PENDING
    _parts: tuple = field(default=None, repr=False, compare=False, hash=False)

    @classmethod
    def start(cls, goal: SequentialGoal) -> "MonitorState":
        return cls(goal, 0, Verdict.PENDING, compile_parts(goal))

    @property
    def remaining(self) -> tuple:
        if self.verdict is not Verdict.PENDING:
            return ()
        return self.goal.parts[self.code // 2 :]

    @property
    def deferred_next(self):
        """Target predicate of a ``NEXT`` check that falls on the next pair, if any."""
        if self.verdict is Verdict.PENDING and self.code % 2:
            return self.goal.parts[self.code // 2].pred
        return None


def monitor_step(m: MonitorState, pair: tuple[int, int]) -> MonitorState:
    if m.verdict is not Verdict.PENDING:
        return m
    parts = m._parts if m._parts is not None else compile_parts(m.goal)
    code = advance(parts, m.code, pair[0], pair[1])
    if code == ACCEPT:
        return MonitorState(m.goal, 0, Verdict.ACCEPTED, parts)
    if code == REJECT:
        return MonitorState(m.goal, 0, Verdict.REJECTED, parts)
    return MonitorState(m.goal, code, Verdict.PENDING, parts)


def run_monitor(goal: SequentialGoal, pairs: Iterable[tuple[int, int]]) -> Verdict:
    m = MonitorState.start(goal)
    for pair in pairs:
        m = monitor_step(m, pair)
        if m.verdict is not Verdict.PENDING:
            break
    return m.verdict


def satisfies_prefix(goal: AnyGoal, pairs: Sequence[tuple[int, int]]) -> Verdict:
    """Verdict of a finite prefix: accepted if any disjunct accepts, rejected if all reject."""
    goal = materialize(goal)
    if goal.is_false:
        return Verdict.REJECTED
    verdicts = [run_monitor(d, pairs) for d in goal.disjuncts]
    if Verdict.ACCEPTED in verdicts:
        return Verdict.ACCEPTED
    if all(v is Verdict.REJECTED for v in verdicts):
        return Verdict.REJECTED
    return Verdict.PENDING


class JointMonitor:
    """Monitor for a whole disjunction over a fixed world size.

    Joint states are tuples of per-disjunct codes with rejected disjuncts
    dropped, so equal futures share one state.
    """

    def __init__(self, goal: AnyGoal, n_states: int, n_actions: int):
        goal = materialize(goal)
        self.goal = goal
        self.parts = [compile_parts(d, n_states, n_actions) for d in goal.disjuncts]
        self.initial = REJECT if goal.is_false else tuple((i, 0) for i in range(len(self.parts)))
        self._cache: dict = {}

    def step(self, joint, s: int, a: int):
        """Next joint state, :data:`ACCEPT` or :data:`REJECT`."""
        key = (joint, s, a)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        alive = []
        result = None
        for i, code in joint:
            c = advance(self.parts[i], code, s, a)
            if c == ACCEPT:
                result = ACCEPT
                break
            if c != REJECT:
                alive.append((i, c))
        if result is None:
            result = tuple(alive) if alive else REJECT
        self._cache[key] = result
        return result
