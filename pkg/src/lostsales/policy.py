"""Admissible ordering policies.

Policies work in integer ticks.  A simulation picks a tick size ``unit / scale``
where ``scale`` is a multiple of every policy's ``refinement``; all order
quantities returned by a policy are integers on that grid.

Every policy here decides from the on-hand stock after the period's receipt
(``I_t + x_{1,t}``) and the rest of the pipeline, which is what lets the exact
evaluators in :mod:`lostsales.dp` use on-hand coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .demand import DemandDistribution, lattice_ratio
from .errors import RateTooHigh
from .lindley import SupremumSolution, stationary_waiting


@dataclass(frozen=True)
class SystemState:
    t: int
    inventory: int
    pipeline: tuple[int, ...]

    def __post_init__(self):
        if self.inventory < 0 or any(x < 0 for x in self.pipeline):
            raise ValueError("inventory and pipeline entries must be non-negative")


class Policy:
    """Decision rule mapping (t, I_t, x_t) to a non-negative order.

    ``start`` creates the per-trajectory context (the only place a policy may
    hold randomness), ``orders`` is the vectorised decision over replications.
    """

    refinement: int = 1
    randomized_first_order: bool = False
    name: str = "policy"

    def start(self, stream: np.random.Generator | None, reps: int, scale: int):
        return None

    def orders(self, t: int, inventory: np.ndarray, pipeline: np.ndarray, scale: int, ctx) -> np.ndarray:
        raise NotImplementedError

    def order(self, state: SystemState, scale: int = 1, ctx=None) -> int:
        inv = np.array([state.inventory], dtype=np.int64)
        pipe = np.array([state.pipeline], dtype=np.int64).reshape(1, -1)
        return int(self.orders(state.t, inv, pipe, scale, ctx)[0])

    def exact_orders(self, t: int, on_hand: np.ndarray, tail: tuple, scale: int):
        """Order branches [(prob, orders per on-hand level)] for exact evaluation."""
        inv = on_hand.astype(np.int64)
        pipe = np.tile(np.array((0,) + tuple(tail), dtype=np.int64), (len(inv), 1))
        return [(1.0, self.orders(t, inv, pipe, scale, None))]

    def to_config(self) -> dict:
        return {"kind": self.name}


@dataclass
class ConstantOrderPolicy(Policy):
    """Orders I_inf + r in period 1 (drawn once per trajectory), then r forever."""

    r: float
    sup_sol: SupremumSolution
    r_units: object = field(repr=False, default=None)
    name: str = "constant"
    randomized_first_order: bool = True

    def __post_init__(self):
        self.refinement = self.sup_sol.scale

    def _r_ticks(self, scale: int) -> int:
        return self.sup_sol.r_ticks * (scale // self.sup_sol.scale)

    def start(self, stream, reps, scale):
        if scale % self.refinement:
            raise ValueError(f"scale {scale} is not a multiple of {self.refinement}")
        return self.sup_sol.sample_ticks(stream, reps, scale)

    def orders(self, t, inventory, pipeline, scale, ctx):
        r_t = self._r_ticks(scale)
        if t == 1:
            return ctx + r_t
        return np.full(len(inventory), r_t, dtype=np.int64)

    def exact_orders(self, t, on_hand, tail, scale):
        r_t = self._r_ticks(scale)
        if t != 1:
            return [(1.0, np.full(len(on_hand), r_t, dtype=np.int64))]
        pmf = self.sup_sol.pmf
        mult = scale // self.sup_sol.scale
        total = pmf.sum()
        return [
            (p / total, np.full(len(on_hand), j * mult + r_t, dtype=np.int64))
            for j, p in enumerate(pmf)
            if p > 0
        ]

    def to_config(self):
        return {"kind": "constant", "r": self.r}


@dataclass
class BaseStockPolicy(Policy):
    """Order up to S: max(0, S - I_t - sum(x_t)).  S is in real units."""

    S: float
    s_units: object = None
    name: str = "base_stock"

    def __post_init__(self):
        if self.S < 0:
            raise ValueError("S must be non-negative")

    def bind(self, unit):
        self.s_units = lattice_ratio(self.S, unit)
        self.refinement = self.s_units.denominator
        return self

    def orders(self, t, inventory, pipeline, scale, ctx):
        s_t = int(self.s_units * scale) if self.s_units is not None else int(round(self.S * scale))
        return np.maximum(0, s_t - inventory - pipeline.sum(axis=1))

    def to_config(self):
        return {"kind": "base_stock", "S": self.S}


def make_constant_order(d: DemandDistribution, r, sup_sol: SupremumSolution | None = None) -> ConstantOrderPolicy:
    """The stationary-start constant-order policy for rate r."""
    if float(r) >= d.mean:
        raise RateTooHigh(f"r={r} must be below E[D]={d.mean}")
    if sup_sol is None:
        sup_sol = stationary_waiting(d, r)
    if not math.isclose(sup_sol.r, float(r), rel_tol=0, abs_tol=1e-12):
        raise ValueError("supremum solution was computed for a different rate")
    return ConstantOrderPolicy(float(r), sup_sol)


def make_base_stock(S, d: DemandDistribution | None = None) -> BaseStockPolicy:
    pol = BaseStockPolicy(float(S))
    if d is not None:
        pol.bind(d.unit)
    return pol


def stationary_cost(d: DemandDistribution, c: float, h: float, r, sup_sol: SupremumSolution | None = None) -> float:
    """Per-period cost of the stationary constant-order policy, h E[I] + c (E[D] - r)."""
    if float(r) >= d.mean:
        raise RateTooHigh(f"r={r} must be below E[D]={d.mean}")
    if sup_sol is None:
        sup_sol = stationary_waiting(d, r)
    return h * sup_sol.mean + c * (d.mean - float(r))


@dataclass
class ZSearch:
    z: float
    cost: float
    objective: float
    grid: np.ndarray
    objectives: np.ndarray
    sup_sol: SupremumSolution


def best_constant_z(d: DemandDistribution, c: float, h: float, grid_step=None, tol: float = 1e-12) -> ZSearch:
    """Smallest grid minimiser of v -> h E[I^v] - c v on [0, E[D]).

    E[I^v] is a mean of suprema of functions affine in v, hence convex in v,
    and so is the objective.  The scan therefore stops after three
    consecutive grid points sit above the running minimum.
    """
    from fractions import Fraction

    step = d.unit / 4 if grid_step is None else Fraction(lattice_ratio(grid_step, d.unit)) * d.unit
    if step <= 0:
        raise ValueError("grid_step must be positive")
    n_max = math.ceil(d.mean / float(step))
    grid, objs, sols = [], [], []
    best_i, rising = 0, 0
    for n in range(n_max + 1):
        v = n * step
        if float(v) >= d.mean:
            break
        sol = stationary_waiting(d, v, tol=tol)
        val = h * sol.mean - c * float(v)
        grid.append(float(v))
        objs.append(val)
        sols.append(sol)
        if val < objs[best_i] - 1e-10:
            best_i, rising = len(objs) - 1, 0
        elif val > objs[best_i] + 1e-10:
            rising += 1
            if rising >= 3:
                break
    z = grid[best_i]
    return ZSearch(
        z=z,
        cost=objs[best_i] + c * d.mean,
        objective=objs[best_i],
        grid=np.array(grid),
        objectives=np.array(objs),
        sup_sol=sols[best_i],
    )


def policy_from_config(spec: dict, d: DemandDistribution, c: float | None = None, h: float | None = None) -> Policy:
    """Build a policy from ``{"kind": "constant" | "best_constant" | "base_stock" | "dp_table", ...}``."""
    kind = spec.get("kind")
    if kind == "constant":
        return make_constant_order(d, spec["r"])
    if kind == "best_constant":
        zs = best_constant_z(d, c, h, spec.get("grid_step"))
        return make_constant_order(d, zs.z, zs.sup_sol)
    if kind == "base_stock":
        return make_base_stock(spec["S"], d)
    if kind == "dp_table":
        from .dp import TablePolicy, load_table

        return TablePolicy(load_table(spec["path"]))
    from .errors import ConfigError

    raise ConfigError(f"unknown policy kind {kind!r}")
