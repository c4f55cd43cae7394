"""Random-walk suprema under constant ordering.

With a constant order r the inventory is the waiting time of a GI/D/1 queue,
W' = (W + r - D)^+, and its stationary law is that of
sup_{k>=0} (k r - D_1 - ... - D_k).  This module computes that law on a
refined integer lattice, the (largest) argmax index of the associated walk,
and the geometric tail constant theta.

Quantities on a refined lattice are called *ticks*; a solution with
``scale = s`` uses ticks of size ``unit / s``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .demand import DemandDistribution, lattice_ratio, sample_index
from .errors import BudgetExceeded, NoConvergence, RateTooHigh

TRIM_MASS = 1e-18


def theta(d: DemandDistribution, r: float) -> float:
    """(E[D] - r)^2 / (4 (E[D]^2 + E[D^2])), defined for 0 <= r < E[D]."""
    r = float(r)
    if r >= d.mean:
        raise RateTooHigh(f"r={r} must be below E[D]={d.mean}")
    if r < 0:
        raise ValueError("r must be non-negative")
    return (d.mean - r) ** 2 / (4.0 * (d.mean**2 + d.second_moment))


def rate_ticks(d: DemandDistribution, r) -> tuple[int, int]:
    """Common refinement for r and the demand lattice: (scale, r in ticks)."""
    frac = lattice_ratio(r, d.unit)
    return frac.denominator, frac.numerator


@dataclass
class SupremumSolution:
    r: float
    scale: int
    tick: Fraction
    pmf: np.ndarray
    mean: float
    second_moment: float
    residual: float
    iterations: int
    r_ticks: int = 0

    @property
    def support(self) -> np.ndarray:
        return np.arange(len(self.pmf)) * float(self.tick)

    def survival_ticks(self) -> np.ndarray:
        """sf[j] = P(I >= j ticks); one entry longer than the pmf (last is 0)."""
        return np.append(np.cumsum(self.pmf[::-1])[::-1], 0.0)

    def pmf_at_scale(self, scale: int) -> np.ndarray:
        """Re-express the pmf on a finer grid whose scale is a multiple of ours."""
        if scale % self.scale:
            raise ValueError(f"scale {scale} is not a multiple of {self.scale}")
        k = scale // self.scale
        out = np.zeros((len(self.pmf) - 1) * k + 1)
        out[::k] = self.pmf
        return out

    def sample_ticks(self, stream: np.random.Generator, n, scale: int | None = None) -> np.ndarray:
        cum = np.cumsum(self.pmf)
        u = stream.random(n) * cum[-1]
        idx = np.searchsorted(cum, u, side="right")
        idx = np.minimum(idx, len(self.pmf) - 1)
        if scale is not None:
            idx = idx * (scale // self.scale)
        return idx.astype(np.int64)


def _lindley_step(p: np.ndarray, demand_rev: np.ndarray, shift: int) -> np.ndarray:
    """One application of W' = (W + r - D)^+ on a pmf over ticks.

    ``demand_rev`` is the tick pmf of D reversed, ``shift = r_ticks - max_atom_ticks``.
    """
    full = np.convolve(p, demand_rev)
    # full[m] is the mass at W' = m + shift
    if shift >= 0:
        return np.concatenate([np.zeros(shift), full])
    cut = -shift
    head = full[: cut + 1].sum()
    return np.concatenate([[head], full[cut + 1 :]])


def stationary_waiting(
    d: DemandDistribution, r, tol: float = 1e-12, max_iter: int = 200_000
) -> SupremumSolution:
    """Stationary law of sup_k (k r - S_k) by Lindley value iteration from 0.

    Iteration stops once successive pmfs differ by less than ``tol`` in total
    variation.  ``residual`` bounds the mass not represented: trimmed upper
    tail plus a geometric extrapolation of the remaining iterations.
    """
    rf = float(r)
    if rf >= d.mean:
        raise RateTooHigh(f"r={rf} must be below E[D]={d.mean}")
    if rf < 0:
        raise ValueError("r must be non-negative")
    scale, r_t = rate_ticks(d, r)
    tick = d.unit / scale
    demand_rev = d.pmf_on_grid(scale)[::-1].copy()
    shift = r_t - d.max_atom * scale

    p = np.array([1.0])
    trimmed = 0.0
    prev_diff = None
    diff = 1.0
    for it in range(1, max_iter + 1):
        q = _lindley_step(p, demand_rev, shift)
        tail = np.cumsum(q[::-1])
        n_drop = int(np.searchsorted(tail, TRIM_MASS, side="right"))
        if 0 < n_drop < len(q):
            trimmed += float(tail[n_drop - 1])
            q = q[: len(q) - n_drop]
        n = max(len(p), len(q))
        diff = 0.5 * float(np.abs(np.pad(q, (0, n - len(q))) - np.pad(p, (0, n - len(p)))).sum())
        p = q
        if diff < tol:
            break
        prev_diff = diff
    else:
        raise NoConvergence(f"Lindley iteration did not reach tol={tol} in {max_iter} steps")
    rho = min(diff / prev_diff, 0.999999) if prev_diff else 0.0
    residual = trimmed + diff * rho / (1.0 - rho)
    support = np.arange(len(p)) * float(tick)
    mean = float(np.dot(p, support))
    return SupremumSolution(
        r=rf,
        scale=scale,
        tick=tick,
        pmf=p,
        mean=mean,
        second_moment=float(np.dot(p, support**2)),
        residual=residual,
        iterations=it,
        r_ticks=r_t,
    )


def walk_max_argmax(prefix_values, terminal_bonus=0):
    """Maximum of ``values`` (bonus added to the last entry) and its largest argmax."""
    vals = list(prefix_values)
    if not vals:
        raise ValueError("prefix_values must be non-empty")
    vals[-1] = vals[-1] + terminal_bonus
    best = max(vals)
    idx = len(vals) - 1 - vals[::-1].index(best)
    return best, idx


def largest_argmax(values: np.ndarray) -> np.ndarray:
    """Row-wise largest index attaining the maximum of a 2-D array."""
    rev = values[:, ::-1]
    return values.shape[1] - 1 - np.argmax(rev == rev.max(axis=1, keepdims=True), axis=1)


@dataclass
class ArgmaxDistribution:
    r: float
    K: int
    theta: float
    counts: np.ndarray
    samples: int
    tail_bound: float
    # sum over samples of (i+1)(i+2)/2 and of its square, for the double-sum estimate
    _dsum: float = field(default=0.0, repr=False)
    _dsum_sq: float = field(default=0.0, repr=False)

    @property
    def pmf(self) -> np.ndarray:
        return self.counts / self.samples

    def tail(self) -> np.ndarray:
        """Empirical P(i >= k) for k = 0..K."""
        return np.cumsum(self.pmf[::-1])[::-1]

    def tail_stderr(self) -> np.ndarray:
        t = self.tail()
        return np.sqrt(t * (1 - t) / self.samples)

    def min_k_pmf(self, k: int) -> np.ndarray:
        """Empirical pmf of min(k, i) over 0..k."""
        p = self.pmf
        return np.append(p[:k], p[k:].sum())

    def double_sum(self) -> tuple[float, float]:
        """Estimate of sum_k sum_{j>=k} P(i >= j) = E[(i+1)(i+2)/2] with its std error."""
        m = self._dsum / self.samples
        var = max(self._dsum_sq / self.samples - m * m, 0.0)
        return m, math.sqrt(var / self.samples)


def horizon_for(th: float, tail_tol: float) -> int:
    """Smallest K with theta^-1 (1 - theta)^K <= tail_tol."""
    return max(0, math.ceil(math.log(tail_tol * th) / math.log1p(-th)))


def argmax_distribution_mc(
    d: DemandDistribution,
    r,
    tail_tol: float,
    samples: int,
    stream: np.random.Generator,
    chunk_elems: int = 20_000_000,
) -> ArgmaxDistribution:
    """Monte Carlo law of the largest argmax of k r - S_k over k = 0..K.

    K comes from the certified geometric tail, so P(true index > K) <= tail_tol.
    """
    th = theta(d, r)
    scale, r_t = rate_ticks(d, r)
    K = horizon_for(th, tail_tol)
    steps = r_t - d.atoms * scale  # increment per atom, in ticks
    counts = np.zeros(K + 1, dtype=np.int64)
    dsum = dsum_sq = 0.0
    per_chunk = max(1, chunk_elems // max(K, 1))
    done = 0
    while done < samples:
        m = min(per_chunk, samples - done)
        if K == 0:
            idx = np.zeros(m, dtype=np.int64)
        else:
            inc = steps[sample_index(d, stream, (m, K))]
            walk = np.empty((m, K + 1), dtype=np.int64)
            walk[:, 0] = 0
            np.cumsum(inc, axis=1, out=walk[:, 1:])
            idx = largest_argmax(walk)
        counts += np.bincount(idx, minlength=K + 1)
        tri = (idx + 1.0) * (idx + 2.0) / 2.0
        dsum += float(tri.sum())
        dsum_sq += float((tri * tri).sum())
        done += m
    return ArgmaxDistribution(
        r=float(r), K=K, theta=th, counts=counts, samples=samples,
        tail_bound=(1 - th) ** (K + 1) / th, _dsum=dsum, _dsum_sq=dsum_sq,
    )


def argmax_finite_exact(
    d: DemandDistribution, r, k: int, sup_sol: SupremumSolution, budget: int = 2_000_000
) -> np.ndarray:
    """Exact pmf of the largest argmax index over 0..k, bonus at index k.

    The bonus is an independent copy of the stationary supremum; ties go to
    the largest index, so index k wins whenever its boosted value reaches the
    running maximum of indices 0..k-1.
    """
    if k == 0:
        return np.array([1.0])
    scale, r_t = rate_ticks(d, r)
    if scale % sup_sol.scale and sup_sol.scale % scale:
        raise ValueError("supremum solution lives on an incompatible lattice")
    common = math.lcm(scale, sup_sol.scale)
    n_seq = len(d.atoms) ** k
    if n_seq * len(sup_sol.pmf) > budget:
        raise BudgetExceeded(f"{n_seq} sequences x {len(sup_sol.pmf)} bonus atoms exceeds budget {budget}")
    mult = common // scale
    idx = np.array(list(itertools.product(range(len(d.atoms)), repeat=k)), dtype=np.int64)
    prob = np.prod(d.probs[idx], axis=1)
    walk = np.zeros((len(idx), k + 1), dtype=np.int64)
    walk[:, 1:] = np.cumsum((r_t - d.atoms[idx] * scale) * mult, axis=1)
    head = walk[:, :k]
    best = head.max(axis=1)
    arg = largest_argmax(head)
    # index k wins iff bonus >= best - walk_k (bonus in ticks of size unit/common)
    sf = sup_sol.survival_ticks()
    need = best - walk[:, k]
    ratio = common // sup_sol.scale
    # bonus value b*ratio >= need  <=>  b >= ceil(need / ratio)
    need_b = np.maximum(-(-need // ratio), 0)
    p_last = np.where(need_b < len(sf), sf[np.minimum(need_b, len(sf) - 1)], 0.0)
    out = np.zeros(k + 1)
    out[k] = float(np.dot(prob, p_last))
    np.add.at(out, arg, prob * (1 - p_last))
    return out


@dataclass
class BoundRecord:
    bound_name: str
    bound_value: float
    estimate: float
    std_error: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "bound_name": self.bound_name,
            "bound_value": self.bound_value,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "pass": self.passed,
        }

    @property
    def slack(self) -> float:
        return self.bound_value - self.estimate


def verify_tail_suite(
    d: DemandDistribution,
    r,
    K: int,
    samples: int,
    stream: np.random.Generator,
    tail_tol: float = 1e-6,
    sup_sol: SupremumSolution | None = None,
    argmax: ArgmaxDistribution | None = None,
) -> list[BoundRecord]:
    """Check the geometric tail, the point-mass Chernoff bound, the double sum
    and the second moment of the supremum.  Tail checks run for k = 0..K."""
    th = theta(d, r)
    if argmax is None:
        argmax = argmax_distribution_mc(d, r, tail_tol, samples, stream)
    if sup_sol is None:
        sup_sol = stationary_waiting(d, r)
    K = min(K, argmax.K)
    tail, se_tail = argmax.tail(), argmax.tail_stderr()
    pmf = argmax.pmf
    se_pmf = np.sqrt(pmf * (1 - pmf) / argmax.samples)
    out = []
    for k in range(K + 1):
        b = (1 - th) ** k / th
        out.append(BoundRecord(f"tail_geq[k={k}]", b, float(tail[k]), float(se_tail[k]),
                               bool(tail[k] <= b + 4 * se_tail[k])))
    for k in range(K + 1):
        b = (1 - th) ** k
        out.append(BoundRecord(f"point_mass[k={k}]", b, float(pmf[k]), float(se_pmf[k]),
                               bool(pmf[k] <= b + 4 * se_pmf[k])))
    ds, ds_se = argmax.double_sum()
    out.append(BoundRecord("double_sum", th**-3, ds, ds_se, bool(ds <= th**-3 + 4 * ds_se)))
    b2 = 2 * th**-3 * d.mean**2
    out.append(BoundRecord("second_moment", b2, sup_sol.second_moment, 0.0, bool(sup_sol.second_moment <= b2)))
    return out
