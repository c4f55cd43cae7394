import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lostsales.demand import (
    from_config,
    from_pmf,
    lattice_ratio,
    newsvendor,
    sample,
    truncate_family,
)
from lostsales.errors import (
    BadParameter,
    ConfigError,
    Deterministic,
    LatticeMismatch,
    NegativeAtom,
    NonStochastic,
)
from lostsales.rng import child_stream


def test_two_point_moments(two_point):
    assert two_point.mean == 1.0
    assert two_point.second_moment == 2.0
    assert two_point.sigma == 1.0
    assert two_point.skewness == pytest.approx(1.0)


def test_unit_scales_values():
    d = from_pmf([0, 3], [0.25, 0.75], unit="1/2")
    assert d.unit == Fraction(1, 2)
    assert d.mean == pytest.approx(1.125)
    assert d.values.tolist() == [0.0, 1.5]


def test_duplicates_merged_and_zeros_dropped():
    d = from_pmf([2, 0, 2, 5], [0.25, 0.5, 0.25, 0.0])
    assert d.atoms.tolist() == [0, 2]
    assert d.probs.tolist() == [0.5, 0.5]


@pytest.mark.parametrize(
    "atoms, probs, err",
    [
        ([0, 1], [0.5, 0.6], NonStochastic),
        ([0, 1], [-0.5, 1.5], NonStochastic),
        ([3, 3], [0.5, 0.5], Deterministic),
        ([-1, 2], [0.5, 0.5], NegativeAtom),
        ([0.5, 2], [0.5, 0.5], LatticeMismatch),
        ([], [], ConfigError),
    ],
)
def test_from_pmf_rejects(atoms, probs, err):
    with pytest.raises(err):
        from_pmf(atoms, probs)


def test_atoms_read_only(two_point):
    with pytest.raises(ValueError):
        two_point.atoms[0] = 5


@pytest.mark.parametrize("family, params", [("geometric", {"mean": 5.0}), ("poisson", {"lam": 3.0}), ("geometric", {"p": 0.3})])
def test_truncation_mass_recorded(family, params):
    d = truncate_family(family, tail_mass=1e-9, **params)
    assert 0 <= d.truncated_mass <= 1e-9
    assert d.probs.sum() == pytest.approx(1.0, abs=1e-12)
    # the cut point is the smallest s with the tail below the tolerance
    s = d.max_atom
    if family == "poisson":
        assert stats.poisson.sf(s - 1, params["lam"]) > 1e-9
    else:
        p = params.get("p", 1 / (1 + params.get("mean", 0)))
        assert (1 - p) ** s > 1e-9 >= (1 - p) ** (s + 1)


def test_truncated_geometric_mean_close():
    d = truncate_family("geometric", mean=5.0)
    assert d.mean == pytest.approx(5.0, abs=1e-5)


@pytest.mark.parametrize("kw", [{"tail_mass": 0.0}, {"tail_mass": 1e-3}, {"p": 1.5}])
def test_truncation_rejects(kw):
    kw = {"p": 0.5, **kw}
    with pytest.raises(BadParameter):
        truncate_family("geometric", **kw)


def test_unknown_family():
    with pytest.raises(BadParameter):
        truncate_family("pareto", alpha=2)


def test_from_config_roundtrip(two_point):
    again = from_config(two_point.to_config())
    assert again.fingerprint() == two_point.fingerprint()
    with pytest.raises(ConfigError):
        from_config({"atoms": [0, 1]})


def _newsvendor_by_enumeration(d, c, h):
    """Smallest minimiser of h E(s-D)^+ + c E(D-s)^+ over lattice points 0..max atom."""
    v = d.values
    best = None
    for s_units in range(d.max_atom + 1):
        s = s_units * float(d.unit)
        cost = h * np.dot(d.probs, np.maximum(s - v, 0)) + c * np.dot(d.probs, np.maximum(v - s, 0))
        if best is None or cost < best[1] - 1e-12:
            best = (s, cost)
    return best


def test_newsvendor_two_point(two_point):
    nv = newsvendor(two_point, 1.0, 1.0)
    # P(D > 0) = 1/2 <= h/(c+h) = 1/2 so Q = 0 and g = c E[D]
    assert nv.Q == 0.0 and nv.g == 1.0
    nv = newsvendor(two_point, 4.0, 1.0)
    assert nv.Q == 2.0 and nv.g == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(
    probs=st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6),
    c=st.floats(0.1, 20.0),
    h=st.floats(0.1, 5.0),
)
def test_newsvendor_g_is_lattice_minimum(probs, c, h):
    p = np.array(probs) / sum(probs)
    d = from_pmf(np.arange(len(p)) * 2, p)
    nv = newsvendor(d, c, h)
    s, cost = _newsvendor_by_enumeration(d, c, h)
    assert nv.g == pytest.approx(cost, rel=1e-9, abs=1e-12)
    # Q is a minimiser (the smallest one up to ties in cost)
    assert nv.Q <= s + 1e-12 or math.isclose(nv.g, cost, rel_tol=1e-9)


def test_sample_moments():
    d = truncate_family("poisson", lam=2.0)
    x = sample(d, child_stream(0, "demand"), 200_000)
    assert x.dtype == np.int64
    assert abs(x.mean() - d.mean) < 4 * d.sigma / math.sqrt(len(x))
    with pytest.raises(ValueError):
        sample(d, child_stream(0, "demand"), 0)


def test_sample_small_support_frequencies(two_point):
    x = sample(two_point, child_stream(1, "demand"), 100_000)
    assert set(np.unique(x)) == {0, 2}
    assert abs((x == 2).mean() - 0.5) < 4 * 0.5 / math.sqrt(len(x))


def test_lattice_ratio():
    assert lattice_ratio(0.25, Fraction(1)) == Fraction(1, 4)
    assert lattice_ratio("3/2", Fraction(1, 2)) == 3
    with pytest.raises(LatticeMismatch):
        lattice_ratio(math.sqrt(2), Fraction(1))
