"""Trajectory simulation of the lost-sales dynamics and exact L-window costs.

Per period t: the front pipeline entry arrives, the policy orders (the
pipeline shifts and the order joins at the back), demand D_t is realised,
I_{t+1} = (I_t + x_{1,t} - D_t)^+ and N_t = (I_t + x_{1,t} - D_t)^-.
Cost C_t = h I_{t+1} + c N_t is counted on the window [L+1, T+L] only and no
orders are placed after period T.

All state lives in integer ticks (``unit / scale``); floats only appear in
probabilities and expectations.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .demand import DemandDistribution, lattice_ratio, sample_index
from .errors import BudgetExceeded
from .lindley import SupremumSolution
from .policy import Policy


def policy_scale(policy: Policy, d: DemandDistribution) -> int:
    if getattr(policy, "s_units", "n/a") is None:
        policy.bind(d.unit)
    return int(policy.refinement)


@dataclass
class Trajectory:
    """Per-period records of one replication; quantities in ticks of size ``tick``."""

    t: np.ndarray
    I: np.ndarray
    x1: np.ndarray
    order: np.ndarray
    D: np.ndarray
    N: np.ndarray
    I_next: np.ndarray
    C: np.ndarray
    tick: float
    seed: object = None

    def inventory_at(self, t: int) -> int:
        """I_t for t in 1..T+L+1."""
        if t == len(self.t) + 1:
            return int(self.I_next[-1])
        return int(self.I[t - 1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "I", "x1", "order", "D", "N", "C"])
            for i in range(len(self.t)):
                w.writerow([
                    int(self.t[i]),
                    self.I[i] * self.tick,
                    self.x1[i] * self.tick,
                    self.order[i] * self.tick,
                    self.D[i] * self.tick,
                    self.N[i] * self.tick,
                    repr(float(self.C[i])),
                ])


@dataclass
class CostSummary:
    mean: float
    stderr: float
    reps: int
    window: tuple[int, int]
    per_period: np.ndarray = field(repr=False, default=None)
    totals: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "reps": self.reps, "window": list(self.window)}


def run_paths(
    policy: Policy,
    demand_ticks: np.ndarray,
    L: int,
    T: int,
    scale: int,
    stream: np.random.Generator | None = None,
) -> dict:
    """Run the dynamics on given demand paths (reps x (T+L) ticks)."""
    reps, horizon = demand_ticks.shape
    if horizon != T + L:
        raise ValueError(f"need {T + L} demand columns, got {horizon}")
    inv = np.zeros(reps, dtype=np.int64)
    pipe = np.zeros((reps, L), dtype=np.int64)
    ctx = policy.start(stream, reps, scale)
    rec = {k: np.empty((reps, horizon), dtype=np.int64) for k in ("I", "x1", "order", "N", "I_next")}
    for t in range(1, horizon + 1):
        x1 = pipe[:, 0].copy()
        if t <= T:
            a = np.asarray(policy.orders(t, inv, pipe, scale, ctx), dtype=np.int64)
            if np.any(a < 0):
                raise ValueError(f"policy produced a negative order in period {t}")
        else:
            a = np.zeros(reps, dtype=np.int64)
        pipe[:, :-1] = pipe[:, 1:]
        pipe[:, -1] = a
        net = inv + x1 - demand_ticks[:, t - 1]
        i = t - 1
        rec["I"][:, i] = inv
        rec["x1"][:, i] = x1
        rec["order"][:, i] = a
        rec["N"][:, i] = np.maximum(-net, 0)
        inv = np.maximum(net, 0)
        rec["I_next"][:, i] = inv
    rec["D"] = demand_ticks
    return rec


def _costs(rec: dict, c: float, h: float, tick: float) -> np.ndarray:
    return h * rec["I_next"] * tick + c * rec["N"] * tick


def simulate(
    policy: Policy,
    d: DemandDistribution,
    c: float,
    h: float,
    L: int,
    T: int,
    reps: int,
    stream: np.random.Generator,
    record: bool = False,
    chunk: int = 20_000,
):
    """Monte Carlo window cost over ``reps`` independent replications.

    Returns a CostSummary, plus the first replication's Trajectory when
    ``record`` is set.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    scale = policy_scale(policy, d)
    tick = float(d.unit) / scale
    totals, per_period = [], np.zeros(T + L)
    traj = None
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        dem = d.atoms[sample_index(d, stream, (m, T + L))] * scale
        rec = run_paths(policy, dem, L, T, scale, stream)
        cost = _costs(rec, c, h, tick)
        totals.append(cost[:, L:].sum(axis=1))
        per_period += cost.sum(axis=0)
        if record and traj is None:
            traj = _trajectory(rec, cost, 0, tick)
        done += m
    totals = np.concatenate(totals)
    summary = CostSummary(
        mean=float(totals.mean()),
        stderr=float(totals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan"),
        reps=reps,
        window=(L + 1, T + L),
        per_period=per_period / reps,
        totals=totals,
    )
    return (summary, traj) if record else summary


def simulate_long_run(
    policy: Policy,
    d: DemandDistribution,
    c: float,
    h: float,
    L: int,
    T: int,
    stream: np.random.Generator,
    batches: int = 30,
):
    """One long trajectory; per-period mean over [L+1, T+L] with a batch-means error bar."""
    scale = policy_scale(policy, d)
    tick = float(d.unit) / scale
    dem = d.atoms[sample_index(d, stream, (1, T + L))] * scale
    rec = run_paths(policy, dem, L, T, scale, stream)
    cost = _costs(rec, c, h, tick)[0, L:]
    usable = (len(cost) // batches) * batches
    bm = cost[:usable].reshape(batches, -1).mean(axis=1)
    summary = CostSummary(
        mean=float(cost.mean()),
        stderr=float(bm.std(ddof=1) / math.sqrt(batches)),
        reps=1,
        window=(L + 1, T + L),
        per_period=cost,
    )
    return summary, _trajectory(rec, _costs(rec, c, h, tick), 0, tick)


def _trajectory(rec: dict, cost: np.ndarray, i: int, tick: float) -> Trajectory:
    n = rec["I"].shape[1]
    return Trajectory(
        t=np.arange(1, n + 1),
        I=rec["I"][i].copy(),
        x1=rec["x1"][i].copy(),
        order=rec["order"][i].copy(),
        D=rec["D"][i].copy(),
        N=rec["N"][i].copy(),
        I_next=rec["I_next"][i].copy(),
        C=cost[i].copy(),
        tick=tick,
    )


def conservation_check(traj: Trajectory, t1: int, t2: int) -> int:
    """Residual of sum N = I_{t2} - I_{t1} + sum D - sum received over [t1, t2-1], in ticks."""
    if not 1 <= t1 < t2 <= len(traj.t) + 1:
        raise ValueError("need 1 <= t1 < t2 <= T+L+1")
    sl = slice(t1 - 1, t2 - 1)
    lost = int(traj.N[sl].sum())
    rhs = traj.inventory_at(t2) - traj.inventory_at(t1) + int(traj.D[sl].sum()) - int(traj.x1[sl].sum())
    return lost - rhs


# ---------------------------------------------------------------- window costs


@dataclass
class WindowCost:
    value: float
    stderr: float
    method: str
    holding: float = 0.0
    lost: float = 0.0


def _scenarios(d: DemandDistribution, L: int, budget: int):
    n = len(d.atoms) ** L
    if n > budget:
        raise BudgetExceeded(f"{n} demand sequences exceed the enumeration budget {budget}")
    idx = np.array(list(itertools.product(range(len(d.atoms)), repeat=L)), dtype=np.int64).reshape(n, L)
    return d.values[idx], np.prod(d.probs[idx], axis=1)


def inventory_maxima(x: np.ndarray, I: float, D: np.ndarray) -> np.ndarray:
    """I_{tau+k} for k = 1..L per scenario via the max-of-partial-sums formula.

    Entry k-1 is max_{j=0..k} (sum_{i=k+1-j}^k (x_i - D_i) + [j == k] I).
    """
    S, L = D.shape
    z = np.asarray(x, dtype=float)[None, :] - D
    out = np.empty((S, L))
    for k in range(1, L + 1):
        suffix = np.cumsum(z[:, :k][:, ::-1], axis=1)  # j = 1..k
        suffix[:, -1] += I
        out[:, k - 1] = np.maximum(suffix.max(axis=1), 0.0)
    return out


def window_cost_formula(
    x,
    I: float,
    d: DemandDistribution,
    c: float,
    h: float,
    mode: str = "exact",
    samples: int = 100_000,
    stream: np.random.Generator | None = None,
    budget: int = 2_000_000,
) -> WindowCost:
    """Expected cost over the L periods starting in state (pipeline x, inventory I).

    h sum_k E[I_{tau+k}] + c (E[I_{tau+L}] - I + L E[D] - sum x), with the
    inventories from the partial-sum maxima.  ``mode="exact"`` enumerates every
    demand sequence, ``mode="mc"`` averages ``samples`` sampled sequences.
    """
    x = np.asarray(x, dtype=float)
    L = len(x)
    if mode == "exact":
        D, w = _scenarios(d, L, budget)
        M = inventory_maxima(x, I, D)
        means = w @ M
        se = 0.0
    elif mode == "mc":
        D = d.values[sample_index(d, stream, (samples, L))]
        M = inventory_maxima(x, I, D)
        means = M.mean(axis=0)
        per = h * M.sum(axis=1) + c * M[:, -1]
        se = float(per.std(ddof=1) / math.sqrt(samples))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    holding = h * float(means.sum())
    lost = c * (float(means[-1]) - I + L * d.mean - float(x.sum()))
    return WindowCost(holding + lost, se, mode, holding, lost)


def consume(yv: np.ndarray, atoms_ticks: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, float]:
    """Push an on-hand pmf through one demand: pmf of (y - D)^+ and E[(y - D)^-] in ticks."""
    n = len(yv)
    out = np.zeros(n)
    cm = np.concatenate([[0.0], np.cumsum(yv)])
    cy = np.concatenate([[0.0], np.cumsum(yv * np.arange(n))])
    lost = 0.0
    for a, p in zip(atoms_ticks, probs):
        a = int(a)
        if a == 0:
            out += p * yv
            continue
        k = min(a, n)
        out[0] += p * cm[k]
        if a < n:
            out[: n - a] += p * yv[a:]
        lost += p * (a * cm[k] - cy[k])
    return out, lost


def window_cost_dynamics(x, I, d: DemandDistribution, c: float, h: float) -> float:
    """Exact L-window cost by propagating the inventory pmf period by period.

    Independent of the partial-sum formula; x and I must be lattice-commensurate.
    """
    ratios = [lattice_ratio(v, d.unit) for v in list(x) + [I]]
    scale = math.lcm(*[f.denominator for f in ratios])
    tick = float(d.unit) / scale
    xt = [int(f * scale) for f in ratios[:-1]]
    it = int(ratios[-1] * scale)
    atoms = d.atoms * scale
    inv = np.zeros(it + 1)
    inv[it] = 1.0
    total = 0.0
    for xk in xt:
        y = np.concatenate([np.zeros(xk), inv])
        inv, lost = consume(y, atoms, d.probs)
        total += h * tick * float(np.dot(inv, np.arange(len(inv)))) + c * tick * lost
    return total


def expected_excess(sup_sol: SupremumSolution, thresholds_ticks: np.ndarray) -> np.ndarray:
    """E[(I - c)^+] in ticks for integer thresholds c (ticks of the solution)."""
    p = sup_sol.pmf
    m = np.arange(len(p))
    F = np.append(np.cumsum(p[::-1])[::-1], 0.0)  # F[j] = P(I >= j)
    G = np.append(np.cumsum((m * p)[::-1])[::-1], 0.0)  # G[j] = E[I; I >= j]
    cth = np.asarray(thresholds_ticks, dtype=np.int64)
    j = np.clip(cth + 1, 0, len(p))
    out = G[j] - cth * F[j]
    neg = cth < 0
    out[neg] = G[0] - cth[neg] * F[0]
    return out


def constant_order_window_cost(
    d: DemandDistribution,
    c: float,
    h: float,
    L: int,
    sup_sol: SupremumSolution,
    mode: str = "exact",
    samples: int = 100_000,
    stream: np.random.Generator | None = None,
    budget: int = 2_000_000,
) -> WindowCost:
    """L-window cost of the stationary constant-order policy from the largest-argmax form.

    h sum_k E[i_k r - S_{i_k} + [i_k == k] I_1] + c L (E[D] - r); the bracket is
    the walk maximum W_k with the independent supremum copy I_1 at index k.
    """
    r_t, scale = sup_sol.r_ticks, sup_sol.scale
    tick = float(sup_sol.tick)
    atoms = d.atoms * scale
    Wsum = np.zeros(L)
    se = 0.0
    if mode == "exact":
        for k in range(1, L + 1):
            n = len(d.atoms) ** k
            if n * len(sup_sol.pmf) > budget:
                raise BudgetExceeded(f"{n} sequences exceed the budget")
            idx = np.array(list(itertools.product(range(len(d.atoms)), repeat=k)), dtype=np.int64)
            w = np.prod(d.probs[idx], axis=1)
            walk = np.zeros((n, k + 1), dtype=np.int64)
            walk[:, 1:] = np.cumsum(r_t - atoms[idx], axis=1)
            best = walk[:, :k].max(axis=1)
            # E[max(best, walk_k + I)] = best + E[(I - (best - walk_k))^+]
            Wsum[k - 1] = float(np.dot(w, best + expected_excess(sup_sol, best - walk[:, k]))) * tick
    elif mode == "mc":
        dem = atoms[sample_index(d, stream, (samples, L))]
        bonus = sup_sol.sample_ticks(stream, samples)
        walk = np.zeros((samples, L + 1), dtype=np.int64)
        walk[:, 1:] = np.cumsum(r_t - dem, axis=1)
        per = np.zeros(samples)
        for k in range(1, L + 1):
            vals = walk[:, : k + 1].copy()
            vals[:, k] += bonus
            wk = vals.max(axis=1) * tick
            Wsum[k - 1] = wk.mean()
            per += h * wk
        se = float(per.std(ddof=1) / math.sqrt(samples))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    holding = h * float(Wsum.sum())
    lost = c * L * (d.mean - sup_sol.r)
    return WindowCost(holding + lost, se, mode, holding, lost)


def summary_json(summary: CostSummary, **extra) -> str:
    return json.dumps({**summary.to_json(), **extra}, sort_keys=True)
