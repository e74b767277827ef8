"""The small worlds used as running examples."""

import numpy as np

from .mdp import ObservableWorld, World

CHAIN_STATES = ("s-2", "s-1", "s0", "s1", "s2")


def make_chain_world(p_R: float, p_L: float) -> World:
    """Five-state ring-ish chain with actions ``L``/``R`` that fail into self-loops.

    ``R`` moves one step right with probability ``p_R`` (from ``s2`` it jumps to
    ``s0``); ``L`` mirrors this with ``p_L`` (``s-2`` jumps to ``s0``).
    """
    L, R = 0, 1
    P = np.zeros((5, 2, 5))
    for i in range(5):
        right = i + 1 if i < 4 else 2
        left = i - 1 if i > 0 else 2
        P[i, R, right] += p_R
        P[i, R, i] += 1 - p_R
        P[i, L, left] += p_L
        P[i, L, i] += 1 - p_L
    return World(P, CHAIN_STATES, ("L", "R"))


def make_fail_world(p_F: float, p_R: float, p_L: float) -> ObservableWorld:
    """Chain world whose sensor reports ``FAIL`` with probability ``p_F``."""
    base = make_chain_world(p_R, p_L)
    O = np.zeros((5, 6))
    O[np.arange(5), np.arange(5)] = 1 - p_F
    O[:, 5] = p_F
    return ObservableWorld(base, O, CHAIN_STATES + ("FAIL",))


def make_three_state_world() -> ObservableWorld:
    """Deterministic three-state world where ``s1`` and ``s2`` look identical.

    Action ``a`` swaps ``s1``/``s2`` and sends ``s3`` to ``s1``; action ``b``
    stays on ``s1`` and ``s3`` and moves ``s2`` to ``s3``.
    """
    a, b = 0, 1
    s1, s2, s3 = 0, 1, 2
    P = np.zeros((3, 2, 3))
    P[s1, a, s2] = P[s2, a, s1] = P[s3, a, s1] = 1
    P[s1, b, s1] = P[s2, b, s3] = P[s3, b, s3] = 1
    O = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return ObservableWorld(World(P, ("s1", "s2", "s3"), ("a", "b")), O, ("o1", "o2"))


BUILTINS = {
    "chain": (make_chain_world, {"p_R": 0.5, "p_L": 0.5}),
    "fail": (make_fail_world, {"p_F": 0.3, "p_R": 0.5, "p_L": 0.5}),
    "three": (make_three_state_world, {}),
}


def make_builtin(name: str, **params):
    try:
        factory, defaults = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin world {name!r}; choose from {sorted(BUILTINS)}") from None
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"builtin {name!r} has no parameters {sorted(unknown)}")
    return factory(**{**defaults, **params})
