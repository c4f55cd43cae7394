import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lostsales.bounds import (
    certified_gap_bound,
    constant_m,
    constants_report,
    coupling_check,
    gap_certificate,
    inventory_cap,
    inventory_cap_check,
    lower_bound_optimize,
    normal_constant_check,
    psi,
    refined_lower_bound,
    rstar_margin_check,
    stein_check,
    theorem1_certificate,
    threshold_y,
)
from lostsales.demand import from_pmf, newsvendor, truncate_family
from lostsales.dp import DPConfig, solve
from lostsales.errors import BadEpsilon, BudgetExceeded, RStarDegenerate
from lostsales.lindley import theta
from lostsales.rng import child_stream
from lostsales.sim import window_cost_formula


def test_m_two_point(two_point):
    # zeta = 1, sigma = 1, E[D] = 1: (26 (3 + 1 + 1))^2 = 130^2
    assert constant_m(two_point, 1, 1) == 16900


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.1, 50), h1=st.floats(0.1, 10), h2=st.floats(0.1, 10))
def test_m_lower_bound_and_monotone_in_h(two_point, c, h1, h2):
    lo, hi = sorted((h1, h2))
    assert constant_m(two_point, c, lo) >= constant_m(two_point, c, hi) >= 676


def test_threshold_y_oracle(two_point):
    eps = 0.5
    # Q = 0, g = 1, E[D^2] = 2: both terms written out by hand
    t1 = 2**14 * 2**1.5 * 27 * 16900**3 / eps
    t2 = (12 * (math.sqrt(2) + 3)) ** 2 / eps**2
    y = threshold_y(two_point, 1, 1, eps)
    assert y.holding_term == pytest.approx(t1, rel=1e-12)
    assert y.lost_sales_term == pytest.approx(t2, rel=1e-12)
    assert y.value == pytest.approx(1.2079e19, rel=1e-4)
    assert y.binding == "holding"
    assert threshold_y(two_point, 1, 1, 1e-20).binding == "lost_sales"


@settings(max_examples=30, deadline=None)
@given(a=st.floats(1e-6, 0.99), b=st.floats(1e-6, 0.99))
def test_threshold_y_nonincreasing(two_point, a, b):
    lo, hi = sorted((a, b))
    assert threshold_y(two_point, 1, 1, lo).value >= threshold_y(two_point, 1, 1, hi).value


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 2.0])
def test_threshold_y_rejects(two_point, eps):
    with pytest.raises(BadEpsilon):
        threshold_y(two_point, 1, 1, eps)


def test_certificate_not_met_at_desk_scale(two_point):
    cert = theorem1_certificate(two_point, 1, 1, 4, 20, 0.5)
    assert not cert.hypotheses_met and cert.promised_ratio is None
    assert cert.required_L == math.ceil(cert.y)
    assert "NOT reproducible" in cert.statement


def test_constants_report(two_point):
    rep = constants_report(two_point, 1, 1, rates=[0.5], eps=[0.5])
    js = rep.to_json()
    assert rep.m == 16900 and rep.theta[0.5] == pytest.approx(1 / 48)
    assert js["Q"] == 0.0


def test_inventory_cap_forms(two_point):
    scaled, printed = inventory_cap(two_point, 1, 1, 4)
    # ceil(sqrt(8)) + 2 = 5
    assert (scaled, printed) == (5.0, 5.0)
    scaled, printed = inventory_cap(truncate_family("poisson", lam=3.0), 1, 1, 4)
    assert printed == 5.0 and scaled == pytest.approx(5 * 3.0, rel=1e-6)


def test_lower_bound_below_zero_order_cost(two_point):
    sol = lower_bound_optimize(two_point, 1, 1, 3)
    assert sol.method == "exact" and sol.scenarios == 8
    assert sol.objective <= 3 * two_point.mean + 1e-9
    assert sol.objective >= 3 * newsvendor(two_point, 1, 1).g - 1e-9


def test_lower_bound_matches_exhaustive_grid(two_point):
    c, h, L = 3.0, 1.0, 2
    sol = lower_bound_optimize(two_point, c, h, L)
    Q = newsvendor(two_point, c, h).Q
    cap, _ = inventory_cap(two_point, c, h, L)
    g = np.arange(0, Q + 1e-9, 0.125)
    gi = np.arange(0, cap + 1e-9, 0.125)
    best = min(
        window_cost_formula([a, b], i, two_point, c, h).value for a in g for b in g for i in gi
    )
    assert sol.objective == pytest.approx(best, abs=1e-9)


def test_lower_bound_below_every_dp_window(geo1):
    c, h, L, T = 4.0, 1.0, 2, 8
    sol = lower_bound_optimize(geo1, c, h, L)
    _, tab = solve(geo1, c, h, DPConfig(L, T))
    pc = tab.period_costs
    for s in range(L, T + 1):
        assert pc[s : s + L].sum() >= sol.objective - 1e-7


def test_lower_bound_saa_needs_stream(geo1):
    with pytest.raises(BudgetExceeded):
        lower_bound_optimize(geo1, 1, 1, 4, budget=10)
    sol = lower_bound_optimize(geo1, 1, 1, 2, budget=10, stream=child_stream(0, "saa"), saa_scenarios=500)
    assert sol.method == "saa" and sol.scenarios == 500


def test_refined_and_coupling(two_point):
    sol = lower_bound_optimize(two_point, 1, 1, 4)
    assert sol.r_star < two_point.mean
    rb = refined_lower_bound(two_point, 1, 1, 4, sol, 50_000, child_stream(0, "rb"))
    assert rb.value <= rb.unrelaxed + 1e-9
    assert coupling_check(two_point, sol, 50_000, child_stream(1, "cp")) == 0
    with pytest.raises(ValueError):
        refined_lower_bound(two_point, 1, 1, 3, sol, 10, child_stream(0, "x"))


def test_gap_certificate(two_point):
    sol = lower_bound_optimize(two_point, 1, 1, 3)
    rep = gap_certificate(two_point, 1, 1, 3, sol, 50_000, child_stream(0, "gap"))
    assert rep.passed and rep.violations == 0
    assert rep.to_json()["pass"] is True
    assert abs(rep.policy_cost - rep.policy_cost_exact) < 4 * rep.policy_cost_stderr + 1e-9


def test_certified_gap_bound_formula(two_point):
    # Q = 0 at c = h = 1, Theta(1/2) = 1/48
    expect = 2**1.5 * 48**3 + 0.5
    assert certified_gap_bound(two_point, 1, 1, 0.5, 0.5) == pytest.approx(expect, rel=1e-12)
    assert theta(two_point, 0.5) == pytest.approx(1 / 48)


def test_degenerate_rstar(two_point):
    sol = lower_bound_optimize(two_point, 4, 1, 2)
    assert sol.r_star >= two_point.mean
    with pytest.raises(RStarDegenerate):
        gap_certificate(two_point, 4, 1, 2, sol, 100, child_stream(0, "deg"))


def test_cap_and_margin_checks(two_point):
    sol = lower_bound_optimize(two_point, 1, 1, 4)
    cap = inventory_cap_check(two_point, 1, 1, 4, sol)
    assert cap["cap_scaled"] == 5.0 and cap["pass"]
    mar = rstar_margin_check(two_point, 1, 1, 4, sol)
    assert mar["required_L"] == pytest.approx(8 * 16900**1.5, rel=1e-12)
    assert mar["required_L"] == pytest.approx(1.7576e7, rel=1e-4)
    assert not mar["hypothesis_met"]


@pytest.mark.parametrize("y", [-2.0, -1.0, 0.0, 0.7, 3.0])
def test_psi_closed_form(y):
    assert psi(y) == pytest.approx(y * stats.norm.cdf(y) + stats.norm.pdf(y), abs=1e-11)


def test_normal_constant():
    chk = normal_constant_check()
    assert chk["reciprocal"] == pytest.approx(12.0026, abs=1e-4)
    assert chk["pass"]


def test_stein_single_term(two_point):
    # standardised two-point is +-1: E max(0, X) = 1/2 against 1/sqrt(2 pi)
    res = stein_check(two_point, 0.0, 1, 20_000, child_stream(0, "stein"))
    assert res.mc_mean == pytest.approx(0.5, abs=0.02)
    assert res.lhs == pytest.approx(0.5 - 1 / math.sqrt(2 * math.pi), abs=0.02)
    assert res.passed
    with pytest.raises(ValueError):
        stein_check(two_point, 0.0, 0, 10, child_stream(0, "s"))
