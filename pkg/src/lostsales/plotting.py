"""Static figures written next to the CLI's CSV/JSON outputs (Agg backend, no display)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def supremum_pmf(sup_sol, path, max_mass: float = 1e-6):
    """Bar plot of the stationary inventory pmf, cut where the remaining mass is negligible."""
    sf = sup_sol.survival_ticks()
    n = max(2, int(np.searchsorted(-sf, -max_mass)))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(sup_sol.support[:n], sup_sol.pmf[:n], width=float(sup_sol.tick) * 0.8)
    ax.set_xlabel("inventory")
    ax.set_ylabel("probability")
    ax.set_title(f"stationary inventory, r = {sup_sol.r:g}, mean {sup_sol.mean:.4g}")
    return _save(fig, path)


def tail_bounds(argmax, path, K: int = 50):
    """Empirical P(i >= k) against the geometric bound on a log scale."""
    K = min(K, argmax.K)
    k = np.arange(K + 1)
    tail = argmax.tail()[: K + 1]
    bound = (1 - argmax.theta) ** k / argmax.theta
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(k, np.maximum(tail, 1e-12), "o", ms=3, label="empirical")
    ax.semilogy(k, np.minimum(bound, 1.0), "-", label="geometric bound (capped at 1)")
    ax.set_xlabel("k")
    ax.set_ylabel("P(argmax >= k)")
    ax.legend()
    return _save(fig, path)


def z_search(zs, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(zs.grid, zs.objectives, ".-")
    ax.axvline(zs.z, color="k", lw=0.8, ls="--")
    ax.set_xlabel("order rate v")
    ax.set_ylabel("h E[I^v] - c v")
    ax.set_title(f"z = {zs.z:g}")
    return _save(fig, path)


def trajectory(traj, path, periods: int = 200):
    n = min(periods, len(traj.t))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.step(traj.t[:n], traj.I[:n] * traj.tick, where="post", label="inventory")
    ax.step(traj.t[:n], traj.N[:n] * traj.tick, where="post", label="lost sales")
    ax.set_xlabel("period")
    ax.legend()
    return _save(fig, path)


def ratio_table(rows, path):
    """Ratio cost(pi_z)/OPT per cell, grouped by demand, against c/h."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ids = sorted({r["demand_id"] for r in rows if "ratio" in r})
    for did in ids:
        sel = sorted((r["c"] / r["h"], r["ratio"]) for r in rows if r.get("demand_id") == did and "ratio" in r)
        if sel:
            x, y = zip(*sel)
            ax.plot(x, y, "o-", label=did)
    for t in (2.0, 1.33, 1.12):
        ax.axhline(t, color="grey", lw=0.6, ls=":")
    ax.set_xscale("log")
    ax.set_xlabel("c / h")
    ax.set_ylabel("cost(pi_z) / OPT")
    ax.legend(fontsize=7)
    return _save(fig, path)
