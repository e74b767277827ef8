"""Worst-case error of an extraction given what the agent revealed.

An extractor only sees which marker each answer favoured. The identification
radius of a run is the largest ``|p_hat - p'|`` over all true values ``p'``
for which some agent of the same class (same δ, stochastic or deterministic)
could have produced exactly that pattern of answers. The set of such ``p'`` is
located on a grid and its outer ends are sharpened by bisection.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from .agents import QueryRecord
from .extraction import Estimate, ExtractionMethod

DEFAULT_GRID = 4001


def _log_values(rec: QueryRecord, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tag, _triple, _a, _b, n, r, k, s, _w, reflect = rec.params
    with np.errstate(divide="ignore"):
        if tag == "XI_K":
            if k < 0:
                return np.full_like(grid, -np.inf), np.zeros_like(grid)
            return stats.binom.logcdf(k, n, grid), stats.binom.logsf(k, n, grid)
        if tag == "XI_RS":
            lp, lq = np.log(grid), np.log1p(-grid)
            one, zero = (lq, lp) if reflect else (lp, lq)
            return (r * one if r else np.zeros_like(grid)), (s * zero if s else np.zeros_like(grid))
    raise ValueError(f"no worst-case analysis for {tag}")


def _consistent_mask(est: Estimate, grid: np.ndarray, stochastic: bool) -> np.ndarray:
    ok = np.ones(grid.shape, bool)
    log_keep = np.log1p(-est.delta) - 1e-12
    for rec in est.transcript:
        l_a, l_b = _log_values(rec, grid)
        target = log_keep + np.maximum(l_a, l_b)
        chose_b = rec.p_b >= rec.p_a
        if stochastic:
            mid = np.logaddexp(l_a, l_b) - np.log(2.0)
            ok &= target <= np.maximum(l_b if chose_b else l_a, mid)
        else:
            ok &= target <= (l_b if chose_b else l_a)
        if not ok.any():
            break
    return ok


def _stochastic(est: Estimate) -> bool:
    return est.method in (ExtractionMethod.T2_STOCH, ExtractionMethod.T3_POMDP)


def consistent_values(est: Estimate, grid: np.ndarray | int = DEFAULT_GRID, stochastic: bool | None = None) -> np.ndarray:
    """Grid points ``p'`` at which every recorded answer is attainable."""
    if isinstance(grid, int):
        grid = np.linspace(0.0, 1.0, grid)
    stochastic = _stochastic(est) if stochastic is None else stochastic
    return grid[_consistent_mask(est, grid, stochastic)]


def consistent_range(est: Estimate, grid: int = DEFAULT_GRID, zooms: int = 4, zoom_points: int = 257) -> tuple[float, float] | None:
    """Outer ends of the consistent set, sharpened by repeated zooming.

    A coarse scan of [0, 1] is followed, if it finds nothing, by a dense scan
    near ``p_hat``. Each outer end is then located more precisely by scanning
    the gap to its inconsistent neighbour on a finer grid, ``zooms`` times.
    Interior gaps in the set are not resolved.
    """
    stochastic = _stochastic(est)
    g = np.linspace(0.0, 1.0, grid)
    mask = _consistent_mask(est, g, stochastic)
    if not mask.any():
        g = np.linspace(max(0.0, est.p_hat - 0.05), min(1.0, est.p_hat + 0.05), 20 * grid)
        mask = _consistent_mask(est, g, stochastic)
        if not mask.any():
            return None
    idx = np.flatnonzero(mask)
    ends = []
    for i, step in ((idx[0], -1), (idx[-1], 1)):
        inside = g[i]
        if not 0 <= i + step < g.size:
            ends.append(inside)
            continue
        outside = g[i + step]
        for _ in range(zooms):
            sub = np.linspace(outside, inside, zoom_points)
            m = _consistent_mask(est, sub, stochastic)
            first = int(np.argmax(m))  # sub[-1] is consistent, so some entry is
            inside, outside = sub[first], sub[max(first - 1, 0)]
            if first == 0:
                break
        ends.append(inside)
    return ends[0], ends[1]


def identification_radius(est: Estimate, grid: int = DEFAULT_GRID) -> float:
    """``max |p_hat - p'|`` over the values consistent with the transcript (NaN if none)."""
    rng = consistent_range(est, grid)
    if rng is None:
        return float("nan")
    return float(max(abs(est.p_hat - rng[0]), abs(est.p_hat - rng[1])))


def fitted_slope(ns, errors) -> float:
    """Least-squares slope of ``log error`` against ``log n``; NaN if any error is zero."""
    ns = np.asarray(ns, float)
    errors = np.asarray(errors, float)
    if errors.size < 2 or np.any(errors <= 0) or np.any(~np.isfinite(errors)):
        return float("nan")
    return float(np.polyfit(np.log(ns), np.log(errors), 1)[0])
