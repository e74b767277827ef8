"""Scalar helpers for the extraction error bounds."""

from __future__ import annotations

import math


def f_log_ratio(x: float) -> float:
    """``log(1-x) / log(x)``, strictly increasing on (0, 1)."""
    if not 0.0 < x < 1.0:
        raise ValueError(f"x={x} outside (0, 1)")
    return math.log1p(-x) / math.log(x)


def f_inverse(y: float, lo: float, hi: float, tol: float = 1e-13) -> float:
    """Solve ``f_log_ratio(x) = y`` on ``[lo, hi]`` by bisection.

    ``y`` outside ``[f(lo), f(hi)]`` is clamped, returning the nearer end.
    """
    if not 0.0 < lo <= hi < 1.0:
        raise ValueError(f"bad bracket [{lo}, {hi}]")
    if y <= f_log_ratio(lo):
        return lo
    if y >= f_log_ratio(hi):
        return hi
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if f_log_ratio(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def f_derivative_lower(x: float) -> float:
    """Lower bound ``1 / (-2 log x)`` on ``f'(x)``, valid for x in (0, 1/2]."""
    return 1.0 / (-2.0 * math.log(x))


def lambert_w_upper(v: float) -> float:
    """An upper bound ``w`` on the principal Lambert W at ``v``: ``w e^w >= v``.

    Newton's method from ``log v``, then nudged upward until the defining
    inequality holds in floating point. Below ``e`` the cheap bound
    ``log(1 + v)`` is returned.
    """
    if v < 0:
        raise ValueError("v must be non-negative")
    if v < math.e:
        return math.log1p(v)
    w = math.log(v)
    for _ in range(100):
        ew = math.exp(w)
        step = (w * ew - v) / (ew * (w + 1))
        w -= step
        if abs(step) < 1e-15 * max(1.0, w):
            break
    resid = abs(w * math.exp(w) - v) / (math.exp(w) * (w + 1))
    w += resid
    while w * math.exp(w) < v:
        w = math.nextafter(w, math.inf)
    return w


def bernstein_L(delta: float) -> float:
    """``log(2(1-δ)/(1-2δ))``; requires δ < 1/2."""
    if not 0.0 <= delta < 0.5:
        raise ValueError(f"delta={delta} must lie in [0, 1/2)")
    return math.log(2 * (1 - delta) / (1 - 2 * delta))


def bernstein_t_star(var: float, L: float) -> float:
    return math.sqrt(2 * var * L) + 2 * L / 3


def crossover_bound(p: float, n: int, delta: float = 0.0) -> float:
    """Deterministic-agent bound ``sqrt(2p(1-p) / ((n-1)(1-δ)))``."""
    return math.sqrt(2 * p * (1 - p) / ((n - 1) * (1 - delta)))


def stochastic_crossover_bound(p: float, n: int, delta: float) -> float:
    """Stochastic-agent bound ``sqrt(2p(1-p)L/n) + 2L/(3n) + 1/n``."""
    L = bernstein_L(delta)
    return math.sqrt(2 * p * (1 - p) * L / n) + 2 * L / (3 * n) + 1 / n


def epsilon_threshold(delta: float) -> float:
    """Gap above 1/2 beyond which a δ-optimal agent is forced onto one branch."""
    return delta / (2 * (1 - delta))


def width2_interior_bound(n: int) -> float:
    return 2 * math.log(n + 1) / n


def width2_zero_bound(n: int) -> float:
    """``(log n - log log n + 1)/n`` for n >= 2."""
    return (math.log(n) - math.log(math.log(n)) + 1) / n


def width2_delta_bound(n: int, delta: float) -> float:
    return 3 * math.log((1 + n * (1 - delta)) / (1 - delta)) * (1 + abs(math.log(1 - delta)) / n) / n


def width2_delta_zero_bound(n: int, delta: float) -> float:
    return lambert_w_upper(n / (1 - delta)) / n
