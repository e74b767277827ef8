"""Matplotlib renderings of the sweep, extraction and tail-curve outputs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps SVG output byte-stable between runs
SVG_META = {"Date": None, "Creator": None}
PNG_META = {"Software": None}


def _save(fig, path: Path, formats=("svg", "png")) -> list[Path]:
    out = []
    for fmt in formats:
        target = path.with_suffix("." + fmt)
        meta = SVG_META if fmt == "svg" else PNG_META
        fig.savefig(target, format=fmt, metadata=meta, bbox_inches="tight", dpi=120)
        out.append(target)
    plt.close(fig)
    return out


def plot_sweep(rows: list[dict], path: str | Path) -> list[Path]:
    """Log-log error against n, one line per group, with -1/2 and -1 reference slopes."""
    plt.rcParams["svg.hashsalt"] = "worldlens"
    groups: dict = defaultdict(lambda: defaultdict(lambda: [0.0, 0.0]))
    for r in rows:
        key = f"{r['method']} {r['agent']} δ={r['delta']} p={r['p_true']:.3g}"
        cell = groups[key][r["n"]]
        cell[0] = max(cell[0], r["abs_error"])
        cell[1] = max(cell[1], r["worst_case_error"])
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    all_n = sorted({r["n"] for r in rows})
    anchor = None
    for i, key in enumerate(sorted(groups)):
        ns = sorted(groups[key])
        worst = np.array([groups[key][n][1] for n in ns])
        err = np.array([groups[key][n][0] for n in ns])
        color = f"C{i % 10}"
        ax.plot(ns, worst, "o-", color=color, label=f"{key} (worst case)")
        pos = err > 0
        ax.plot(np.array(ns)[pos], err[pos], "x:", color=color, label=f"{key} (observed)")
        if anchor is None and np.all(worst > 0):
            anchor = (ns[0], worst[0])
    if anchor is not None and len(all_n) > 1:
        xs = np.array([all_n[0], all_n[-1]], float)
        for slope, style in ((-0.5, "--"), (-1.0, "-.")):
            ax.plot(xs, anchor[1] * (xs / anchor[0]) ** slope, style, color="gray", label=f"slope {slope:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("|p̂ − p|")
    ax.legend(fontsize=7)
    return _save(fig, Path(path))


def plot_extract(rows: list[dict], path: str | Path) -> list[Path]:
    """Estimated against true entries with error bars at the guaranteed bound."""
    plt.rcParams["svg.hashsalt"] = "worldlens"
    fig, ax = plt.subplots(figsize=(5, 5))
    p = np.array([r["p_true"] for r in rows])
    q = np.array([r["p_hat"] for r in rows])
    b = np.array([r["bound_at_true"] for r in rows])
    ax.errorbar(p, q, yerr=b, fmt="o", ms=3, capsize=2, label="estimate ± bound")
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("true P(s'|s,a)")
    ax.set_ylabel("estimate")
    ax.set_xlim(-0.05, 1.05)
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    return _save(fig, Path(path))


def plot_figure4(fig4, path: str | Path) -> list[Path]:
    """Tail probabilities, one draw of feasible first-action masses and the forced-region boundary."""
    plt.rcParams["svg.hashsalt"] = "worldlens"
    ks = [r["k"] for r in fig4.rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ks, [r["P_gt"] for r in fig4.rows], "-", color="C1", label="P(X > k)")
    ax.plot(ks, [r["P_le"] for r in fig4.rows], "-", color="C0", label="P(X ≤ k)")
    ax.plot(ks, [r["p_b"] for r in fig4.rows], "o", color="C1", ms=4, label="p_b,k")
    ax.plot(ks, [r["p_a"] for r in fig4.rows], "o", color="C0", ms=4, label="p_a,k")
    ax.fill_between(ks, [r["p_a_min"] for r in fig4.rows], [r["p_a_max"] for r in fig4.rows], color="C0", alpha=0.12,
                    label="feasible p_a,k")
    ax.axhline(0.5 + fig4.epsilon, color="gray", lw=0.8, ls=":")
    ax.axhline(0.5 - fig4.epsilon, color="gray", lw=0.8, ls=":")
    ax.axvline(fig4.boundary, color="k", lw=1.2, label=f"forced boundary {fig4.boundary:g}")
    ax.set_xlabel("k")
    ax.set_ylabel("probability")
    ax.set_title(f"p={fig4.p:g}, n={fig4.n}, δ={fig4.delta:g}, ε={fig4.epsilon:g}")
    ax.legend(fontsize=7, loc="center right")
    return _save(fig, Path(path))
