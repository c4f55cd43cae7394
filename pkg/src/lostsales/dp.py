"""Exact finite-horizon dynamic programming for OPT(L, T).

The cost-to-go at the moment of ordering depends on the inventory I_t and the
arriving lot x_{1,t} only through the on-hand level y = I_t + x_{1,t}, so the
table is indexed by (y, x_2, ..., x_L) on the demand lattice.  One Bellman
step is a matrix product with the (y - D)^+ transition matrix per value of
x_2, followed by a minimum over the order placed.

Initial state is I_1 = 0 with an empty pipeline; costs accrue on [L+1, T+L];
orders are restricted to {0, step, ..., cap} in periods 1..T and are 0 after.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .demand import DemandDistribution, newsvendor
from .errors import BudgetExceeded, CapTooTight, StateBudgetExceeded
from .policy import Policy, best_constant_z, make_constant_order
from .sim import consume


@dataclass
class DPConfig:
    L: int
    T: int
    order_cap: int | None = None  # lattice units; default Q
    inventory_cap: int | None = None  # lattice units; default Q (L+2) + max atom
    order_step: int = 1
    state_budget: int = 20_000_000
    clip_tol: float = 1e-6
    check_cap: bool = True
    cap_rel_tol: float = 1e-6
    keep_values: bool = True

    def __post_init__(self):
        if not self.T > self.L > 0:
            raise ValueError("need T > L > 0")
        if self.order_step < 1:
            raise ValueError("order_step must be a positive number of lattice units")

    def resolved(self, d: DemandDistribution, c: float, h: float) -> "DPConfig":
        nv = newsvendor(d, c, h)
        cap = nv.Q_units if self.order_cap is None else int(self.order_cap)
        cap -= cap % self.order_step
        imax = nv.Q_units * (self.L + 2) + d.max_atom if self.inventory_cap is None else int(self.inventory_cap)
        imax = max(imax, cap, 1)
        return DPConfig(self.L, self.T, cap, imax, self.order_step, self.state_budget,
                        self.clip_tol, self.check_cap, self.cap_rel_tol, self.keep_values)

    def state_count(self) -> int:
        n_a = self.order_cap // self.order_step + 1
        return (self.inventory_cap + 1) * n_a ** (self.L - 1)


@dataclass
class ValueTable:
    L: int
    T: int
    unit: Fraction
    order_cap: int
    inventory_cap: int
    order_step: int
    actions: list  # period t -> int16 array of action indices over (y, x2, ..., xL)
    opt: float
    values: list | None = field(default=None, repr=False)  # period t -> cost-to-go, t = 1..T+L
    clip_mass: float = 0.0
    period_costs: np.ndarray | None = field(default=None, repr=False)
    cap_check: dict | None = None

    @property
    def n_actions(self) -> int:
        return self.order_cap // self.order_step + 1

    def value(self, t: int, inventory: int, pipeline) -> float:
        """Optimal cost-to-go at the start of period t in lattice units (I_t, x_t)."""
        if self.values is None:
            raise ValueError("table was solved without keep_values")
        idx = self._index(inventory + pipeline[0], pipeline[1:])
        return float(self.values[t - 1][idx])

    def action(self, t: int, inventory: int, pipeline) -> int:
        """Optimal order (lattice units) in state (I_t, x_t)."""
        if t > self.T:
            return 0
        return int(self.actions[t - 1][self._index(inventory + pipeline[0], pipeline[1:])]) * self.order_step

    def _index(self, y, tail):
        y = min(int(y), self.inventory_cap)
        return (y,) + tuple(int(v) // self.order_step for v in tail)

    def header(self) -> dict:
        return {
            "L": self.L,
            "T": self.T,
            "lattice": str(self.unit),
            "order_cap": self.order_cap,
            "inventory_cap": self.inventory_cap,
            "order_step": self.order_step,
            "opt": repr(self.opt),
            "checksum": self.checksum(),
        }

    def checksum(self) -> str:
        hsh = hashlib.sha256()
        for a in self.actions:
            hsh.update(np.ascontiguousarray(a, dtype=np.int16).tobytes())
        hsh.update(repr(self.opt).encode())
        return hsh.hexdigest()

    def save(self, path) -> None:
        arrays = {f"actions_{t + 1}": a.astype(np.int16) for t, a in enumerate(self.actions)}
        np.savez_compressed(path, header=np.array(json.dumps(self.header())), **arrays)


def load_table(path) -> ValueTable:
    with np.load(path) as z:
        hdr = json.loads(str(z["header"]))
        actions = [z[f"actions_{t}"] for t in range(1, hdr["T"] + 1)]
    tab = ValueTable(hdr["L"], hdr["T"], Fraction(hdr["lattice"]), hdr["order_cap"], hdr["inventory_cap"],
                     hdr["order_step"], actions, float(hdr["opt"]))
    if tab.checksum() != hdr["checksum"]:
        raise ValueError(f"checksum mismatch in {path}")
    return tab


def _transition(d: DemandDistribution, Y: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """P[y, u] = P((y - D)^+ = u), E[(y - D)^+], E[(y - D)^-] for y = 0..Y-1 (lattice units)."""
    P = np.zeros((Y, Y))
    hold = np.zeros(Y)
    lost = np.zeros(Y)
    y = np.arange(Y)
    for a, p in zip(d.atoms, d.probs):
        u = np.maximum(y - a, 0)
        P[y, u] += p
        hold += p * u
        lost += p * np.maximum(a - y, 0)
    return P, hold, lost


def solve(d: DemandDistribution, c: float, h: float, cfg: DPConfig):
    """Backward induction; returns (OPT, ValueTable).

    Runs a forward pass of the optimal table to measure clipping at the
    inventory cap (CapTooTight above ``clip_tol``) and, when ``check_cap``,
    re-solves with the cap doubled and requires the relative change in OPT to
    stay below ``cap_rel_tol``.
    """
    cfg = cfg.resolved(d, c, h)
    if cfg.state_count() > cfg.state_budget:
        raise StateBudgetExceeded(f"{cfg.state_count()} states exceed budget {cfg.state_budget}")
    opt, table = _backward(d, c, h, cfg)
    costs, clip = forward_table(table, d, c, h)
    table.clip_mass = clip
    table.period_costs = costs
    if clip > cfg.clip_tol:
        raise CapTooTight(f"optimal policy pushes {clip:.3g} mass onto inventory cap {cfg.inventory_cap}")
    if cfg.check_cap:
        big = DPConfig(cfg.L, cfg.T, cfg.order_cap, 2 * cfg.inventory_cap, cfg.order_step,
                       cfg.state_budget * 4, cfg.clip_tol, False, cfg.cap_rel_tol, False)
        opt2, _ = _backward(d, c, h, big)
        rel = abs(opt2 - opt) / max(abs(opt), 1e-300)
        table.cap_check = {"doubled_cap": big.inventory_cap, "opt_doubled": opt2, "relative_change": rel}
        if rel >= cfg.cap_rel_tol:
            raise CapTooTight(f"doubling the inventory cap moves OPT by {rel:.3g} (relative)")
    return opt, table


def _backward(d, c, h, cfg: DPConfig):
    L, T, step = cfg.L, cfg.T, cfg.order_step
    Y = cfg.inventory_cap + 1
    A = cfg.order_cap // step + 1
    unit = float(d.unit)
    P, hold, lost = _transition(d, Y)
    stage_cost = unit * (h * hold + c * lost)
    rows = np.arange(Y)
    R = A ** max(L - 2, 0)

    J = np.zeros(Y) if L == 1 else np.zeros((Y, A ** (L - 1)))
    actions: list = [None] * T
    values: list = [None] * (T + L)
    for t in range(T + L, 0, -1):
        cost_t = stage_cost if t >= L + 1 else np.zeros(Y)
        n_act = A if t <= T else 1
        if L == 1:
            K = np.empty((n_act, Y))
            for a in range(n_act):
                K[a] = P @ J[np.minimum(rows + a * step, Y - 1)]
            best = K.argmin(axis=0)
            Jt = cost_t + K[best, rows]
            if t <= T:
                actions[t - 1] = best.astype(np.int16)
        else:
            Jn = J.reshape(Y, R, A)
            Jt = np.empty((Y, A, R))
            arg = np.empty((Y, A, R), dtype=np.int16) if t <= T else None
            for v in range(A):
                shifted = Jn[np.minimum(rows + v * step, Y - 1)]
                if t > T:
                    Jt[:, v, :] = cost_t[:, None] + P @ shifted[:, :, 0]
                else:
                    K = (P @ shifted.reshape(Y, R * A)).reshape(Y, R, A)
                    b = K.argmin(axis=2)
                    arg[:, v, :] = b
                    Jt[:, v, :] = cost_t[:, None] + np.take_along_axis(K, b[:, :, None], axis=2)[:, :, 0]
            if t <= T:
                actions[t - 1] = arg.reshape((Y,) + (A,) * (L - 1))
            Jt = Jt.reshape(Y, A * R)
        J = Jt
        if cfg.keep_values:
            values[t - 1] = J.reshape((Y,) + (A,) * (L - 1)) if L > 1 else J
    opt = float(J.reshape(-1)[0])
    table = ValueTable(L, T, d.unit, cfg.order_cap, cfg.inventory_cap, step, actions, opt,
                       values if cfg.keep_values else None)
    return opt, table


def forward_table(table: ValueTable, d: DemandDistribution, c: float, h: float) -> tuple[np.ndarray, float]:
    """Exact per-period expected costs of the tabulated policy from the empty state.

    Uses the same clipped transitions as the solver, so the window total equals
    OPT; the returned clip mass is the probability pushed past the cap.
    """
    L, T, step = table.L, table.T, table.order_step
    Y = table.inventory_cap + 1
    A = table.n_actions
    R = A ** max(L - 2, 0)
    P, hold, lost = _transition(d, Y)
    stage_cost = float(d.unit) * (h * hold + c * lost)
    PT = P.T.copy()
    dist = np.zeros(Y) if L == 1 else np.zeros((Y, A, R))
    dist.reshape(-1)[0] = 1.0
    costs = np.zeros(T + L)
    clip = 0.0
    for t in range(1, T + L + 1):
        ymarg = dist if L == 1 else dist.sum(axis=(1, 2))
        if t >= L + 1:
            costs[t - 1] = float(ymarg @ stage_cost)
        if L == 1:
            act = table.actions[t - 1] if t <= T else np.zeros(Y, dtype=np.int16)
            nxt = np.zeros(Y)
            for a in np.unique(act[dist > 0]):
                u = PT @ np.where(act == a, dist, 0.0)
                s = int(a) * step
                clip += _shift_into(nxt, u, s, Y)
            dist = nxt
        else:
            act = table.actions[t - 1].reshape(Y, A, R) if t <= T else None
            nxt = np.zeros((Y, R, A))
            for v in range(A):
                sub = dist[:, v, :]
                if not sub.any():
                    continue
                s = v * step
                if act is None:
                    clip += _shift_into(nxt[:, :, 0], PT @ sub, s, Y)
                    continue
                av = act[:, v, :]
                for a in np.unique(av[sub > 0]):
                    u = PT @ np.where(av == a, sub, 0.0)
                    clip += _shift_into(nxt[:, :, int(a)], u, s, Y)
            dist = nxt.reshape(Y, A, R)
    return costs, clip


def _shift_into(target: np.ndarray, u: np.ndarray, s: int, Y: int) -> float:
    """target[y + s] += u[y], folding overflow onto the cap; returns the folded mass."""
    if s == 0:
        target += u
        return 0.0
    target[s:] += u[: Y - s]
    over = u[Y - s:]
    target[Y - 1] += over.sum(axis=0)
    return float(over.sum())


class TablePolicy(Policy):
    """Replays a solved ValueTable (lattice orders, refinement 1)."""

    name = "dp_table"

    def __init__(self, table: ValueTable):
        self.table = table
        self.refinement = 1

    def orders(self, t, inventory, pipeline, scale, ctx):
        tab = self.table
        if t > tab.T:
            return np.zeros(len(inventory), dtype=np.int64)
        if np.any(inventory % scale) or np.any(pipeline % (scale * tab.order_step)):
            raise ValueError("state is off the table lattice")
        y = np.minimum((inventory + pipeline[:, 0]) // scale, tab.inventory_cap)
        tail = pipeline[:, 1:] // (scale * tab.order_step)
        if np.any(tail >= tab.n_actions):
            raise ValueError("pipeline entry beyond the table's order cap")
        idx = (y,) + tuple(tail[:, i] for i in range(tail.shape[1]))
        return tab.actions[t - 1][idx].astype(np.int64) * tab.order_step * scale

    def to_config(self):
        return {"kind": "dp_table"}


@dataclass
class PolicyEvaluation:
    mean: float
    stderr: float
    method: str
    per_period: np.ndarray | None = field(default=None, repr=False)
    reps: int = 0


def exact_forward(policy: Policy, d: DemandDistribution, c: float, h: float, L: int, T: int,
                  state_budget: int = 200_000) -> np.ndarray:
    """Exact per-period expected costs for a policy deciding on on-hand stock.

    The state distribution is a map from pipeline tail (x_2..x_L) to a pmf over
    the on-hand level; randomised first orders branch over their pmf.
    """
    if getattr(policy, "s_units", "n/a") is None:
        policy.bind(d.unit)
    scale = int(policy.refinement)
    tick = float(d.unit) / scale
    atoms = d.atoms * scale
    dist = {(0,) * (L - 1): np.array([1.0])}
    costs = np.zeros(T + L)
    for t in range(1, T + L + 1):
        nxt: dict = {}
        for tail, yv in dist.items():
            n = len(yv)
            if t >= L + 1:
                u, lost = consume(yv, atoms, d.probs)
                costs[t - 1] += tick * (h * float(u @ np.arange(n)) + c * lost)
            y = np.arange(n)
            branches = policy.exact_orders(t, y, tail, scale) if t <= T else [(1.0, np.zeros(n, dtype=np.int64))]
            for prob, orders in branches:
                for a in np.unique(orders[yv > 0]):
                    w = np.where(orders == a, yv, 0.0) * prob
                    u, _ = consume(w, atoms, d.probs)
                    s = tail[0] if L > 1 else int(a)
                    key = tail[1:] + (int(a),) if L > 1 else ()
                    new = np.concatenate([np.zeros(s), u])
                    old = nxt.get(key)
                    if old is None:
                        nxt[key] = new
                    else:
                        if len(old) < len(new):
                            old = np.pad(old, (0, len(new) - len(old)))
                        old[: len(new)] += new
                        nxt[key] = old
        dist = nxt
        if len(dist) > state_budget:
            raise BudgetExceeded(f"{len(dist)} pipeline states exceed budget {state_budget}")
    return costs


def evaluate_policy(
    policy: Policy,
    d: DemandDistribution,
    c: float,
    h: float,
    L: int,
    T: int,
    exact: bool = True,
    reps: int = 10_000,
    stream: np.random.Generator | None = None,
) -> PolicyEvaluation:
    """Expected window cost over [L+1, T+L]: exact forward pass or Monte Carlo."""
    if exact:
        if isinstance(policy, TablePolicy):
            costs, _ = forward_table(policy.table, d, c, h)
        else:
            costs = exact_forward(policy, d, c, h, L, T)
        return PolicyEvaluation(float(costs[L:].sum()), 0.0, "exact", costs)
    from .sim import simulate

    s = simulate(policy, d, c, h, L, T, reps, stream)
    return PolicyEvaluation(s.mean, s.stderr, "mc", s.per_period, reps)


@dataclass
class RatioResult:
    L: int
    T: int
    c: float
    h: float
    opt: float
    cost_pi_z: float
    ratio: float
    z: float
    g: float
    table: ValueTable | None = field(default=None, repr=False)


def opt_ratio(d: DemandDistribution, c: float, h: float, L: int, T: int,
              cfg: DPConfig | None = None, z_step=None) -> RatioResult:
    """cost(pi_z) / OPT(L, T) with an exact numerator and the DP denominator."""
    cfg = cfg or DPConfig(L, T)
    opt, table = solve(d, c, h, cfg)
    zs = best_constant_z(d, c, h, z_step)
    pol = make_constant_order(d, zs.z, zs.sup_sol)
    num = evaluate_policy(pol, d, c, h, L, T, exact=True).mean
    return RatioResult(L, T, c, h, opt, num, num / opt, zs.z, newsvendor(d, c, h).g, table)
