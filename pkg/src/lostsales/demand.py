"""Finite lattice demand distributions and the newsvendor scalars built on them.

Every atom is stored as a non-negative integer multiple of ``unit`` (a
``Fraction``).  Moments are reported in real units.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import BadParameter, ConfigError, Deterministic, LatticeMismatch, NegativeAtom, NonStochastic

PROB_TOL = 1e-12
# largest lattice refinement accepted when snapping a real quantity to the lattice
MAX_REFINEMENT = 4096


def as_fraction(value, max_den: int = 10**9) -> Fraction:
    """Exact rational for ints/strings/Fractions; floats are rationalised."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value)
    f = Fraction(float(value))
    g = f.limit_denominator(max_den)
    return g if abs(float(g) - float(value)) <= 1e-15 * max(1.0, abs(float(value))) else f


def lattice_ratio(value, unit: Fraction, max_refinement: int = MAX_REFINEMENT) -> Fraction:
    """Express ``value`` in units of ``unit`` as a fraction with small denominator.

    Raises LatticeMismatch when no denominator up to ``max_refinement``
    reproduces ``value`` to 1e-12 relative accuracy.
    """
    exact = as_fraction(value) / unit
    snapped = exact.limit_denominator(max_refinement)
    if abs(float(snapped - exact)) > 1e-12 * max(1.0, abs(float(exact))):
        raise LatticeMismatch(f"{value} is not commensurate with lattice unit {unit}")
    return snapped


@dataclass(frozen=True, eq=False)
class DemandDistribution:
    atoms: np.ndarray
    probs: np.ndarray
    unit: Fraction = Fraction(1)
    truncated_mass: float = 0.0
    label: str = ""
    mean: float = field(init=False)
    second_moment: float = field(init=False)
    variance: float = field(init=False)
    sigma: float = field(init=False)
    skewness: float = field(init=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=float)
        atoms.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "unit", as_fraction(self.unit))
        v = self.values
        mean = float(np.dot(probs, v))
        second = float(np.dot(probs, v * v))
        var = float(np.dot(probs, (v - mean) ** 2))
        sigma = math.sqrt(var)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "second_moment", second)
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "skewness", float(np.dot(probs, np.abs(v - mean) ** 3)) / sigma**3)

    @property
    def values(self) -> np.ndarray:
        """Atoms in real units."""
        return self.atoms * float(self.unit)

    @property
    def max_atom(self) -> int:
        return int(self.atoms[-1])

    @property
    def third_abs_moment(self) -> float:
        """E|X|^3 for the standardised variable X = (D - E[D]) / sigma."""
        return self.skewness

    def survival_units(self, s: int) -> float:
        """P(D > s) with s in lattice units, summed from the upper tail."""
        return float(self.probs[self.atoms > s].sum())

    def pmf_on_grid(self, scale: int = 1) -> np.ndarray:
        """Dense pmf over 0..max_atom*scale on the grid refined by ``scale``."""
        out = np.zeros(self.max_atom * scale + 1)
        out[self.atoms * scale] = self.probs
        return out

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_config(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def to_config(self) -> dict:
        return {
            "atoms": [int(a) for a in self.atoms],
            "probs": [float(p) for p in self.probs],
            "unit": str(self.unit),
        }

    def __repr__(self) -> str:
        name = self.label or f"{len(self.atoms)} atoms"
        return f"DemandDistribution({name}, mean={self.mean:.6g}, sigma={self.sigma:.6g})"


@dataclass(frozen=True)
class NewsvendorScalars:
    Q: float
    Q_units: int
    g: float
    critical_ratio: float


def from_pmf(atoms: Sequence, probs: Sequence[float], unit="1", label: str = "") -> DemandDistribution:
    """Build a distribution from atoms given in lattice units.

    Duplicate atoms are merged and atoms with zero probability dropped.
    """
    unit = as_fraction(unit)
    if unit <= 0:
        raise BadParameter("lattice unit must be positive")
    a = np.asarray(atoms)
    p = np.asarray(probs, dtype=float)
    if a.shape != p.shape or a.ndim != 1 or a.size == 0:
        raise ConfigError("atoms and probs must be non-empty 1-D sequences of equal length")
    if np.any(a < 0):
        raise NegativeAtom(f"negative atom in {a.tolist()}")
    if not np.all(np.equal(np.mod(a, 1), 0)):
        raise LatticeMismatch("atoms must be integers (multiples of the lattice unit)")
    if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
        raise NonStochastic(f"probabilities sum to {p.sum()!r}")
    a = a.astype(np.int64)
    uniq, inv = np.unique(a, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inv, p)
    keep = merged > 0
    uniq, merged = uniq[keep], merged[keep]
    if len(uniq) < 2:
        raise Deterministic("demand must not be deterministic")
    return DemandDistribution(uniq, merged, unit, label=label)


def truncate_family(family: str, tail_mass: float = 1e-9, unit="1", **params) -> DemandDistribution:
    """Truncate a geometric (on 0,1,2,...) or Poisson law and renormalise.

    Geometric uses P(D = k) = p (1 - p)^k, so the mean is (1 - p) / p.
    The cut point is the smallest s with P(D > s) <= tail_mass.
    """
    if not 0 < tail_mass <= 1e-6:
        raise BadParameter("tail_mass must lie in (0, 1e-6]")
    if family == "geometric":
        p = params.get("p")
        if p is None and "mean" in params:
            p = 1.0 / (1.0 + float(params["mean"]))
        if p is None or not 0 < p < 1:
            raise BadParameter(f"geometric p must be in (0, 1), got {p!r}")
        # P(D > s) = (1-p)^(s+1); search by cumulative summation
        s, tail, probs = 0, 1.0 - p, [p]
        while tail > tail_mass:
            probs.append(p * (1 - p) ** (s + 1))
            s += 1
            tail = (1 - p) ** (s + 1)
        label = f"geometric(p={p:g})"
    elif family == "poisson":
        lam = params.get("lam", params.get("mean"))
        if lam is None or lam <= 0:
            raise BadParameter(f"poisson rate must be positive, got {lam!r}")
        s = int(stats.poisson.isf(tail_mass, lam))
        while stats.poisson.sf(s, lam) > tail_mass:
            s += 1
        while s > 0 and stats.poisson.sf(s - 1, lam) <= tail_mass:
            s -= 1
        probs = stats.poisson.pmf(np.arange(s + 1), lam).tolist()
        tail = float(stats.poisson.sf(s, lam))
        label = f"poisson(lam={lam:g})"
    else:
        raise BadParameter(f"unknown family {family!r}")
    probs = np.asarray(probs, dtype=float)
    kept = probs.sum()
    d = from_pmf(np.arange(len(probs)), probs / kept, unit=unit, label=label)
    object.__setattr__(d, "truncated_mass", float(1.0 - kept))
    return d


def from_config(spec: Mapping) -> DemandDistribution:
    """Parse ``{"atoms", "probs", "unit"}`` or ``{"family", ...params, "tail_mass"}``."""
    spec = dict(spec)
    try:
        if "family" in spec:
            family = spec.pop("family")
            tail = float(spec.pop("tail_mass", 1e-9))
            unit = spec.pop("unit", "1")
            return truncate_family(family, tail, unit=unit, **spec)
        return from_pmf(spec["atoms"], spec["probs"], unit=spec.get("unit", "1"), label=spec.get("label", ""))
    except KeyError as exc:
        raise ConfigError(f"demand spec missing key {exc}") from None


def newsvendor(d: DemandDistribution, c: float, h: float) -> NewsvendorScalars:
    """Critical-fractile quantity Q and the per-period cost floor g.

    Q is the smallest lattice point s with P(D > s) <= h / (c + h); it is
    always 0 or an atom because the survival function only drops at atoms.
    """
    if c <= 0 or h <= 0:
        raise BadParameter("c and h must be positive")
    ratio = h / (c + h)
    tails = np.cumsum(d.probs[::-1])[::-1]  # tails[i] = P(D >= atoms[i])
    surv_after = np.append(tails[1:], 0.0)  # P(D > atoms[i])
    q_units = None
    if d.survival_units(0) <= ratio + PROB_TOL:
        q_units = 0
    else:
        for a, tail in zip(d.atoms, surv_after):
            if tail <= ratio + PROB_TOL:
                q_units = int(a)
                break
    Q = q_units * float(d.unit)
    v = d.values
    g = h * float(np.dot(d.probs, np.maximum(Q - v, 0))) + c * float(np.dot(d.probs, np.maximum(v - Q, 0)))
    return NewsvendorScalars(Q=Q, Q_units=q_units, g=g, critical_ratio=c / (c + h))


def sample(d: DemandDistribution, stream: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. demands, returned in lattice units (int64)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    idx = sample_index(d, stream, n)
    return d.atoms[idx]


def sample_index(d: DemandDistribution, stream: np.random.Generator, shape) -> np.ndarray:
    """Atom indices by inverse CDF on the cumulative table."""
    cum = np.cumsum(d.probs)
    cum[-1] = 1.0
    u = stream.random(shape)
    if len(cum) <= 8:
        # threshold counting beats a binary search for tiny supports
        idx = np.zeros(u.shape, dtype=np.int64)
        for c in cum[:-1]:
            idx += u >= c
        return idx
    return np.searchsorted(cum, u, side="right").astype(np.int64)
