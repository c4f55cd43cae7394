import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lostsales.demand import from_pmf, truncate_family
from lostsales.errors import ConfigError, RateTooHigh
from lostsales.lindley import stationary_waiting
from lostsales.policy import (
    SystemState,
    best_constant_z,
    make_base_stock,
    make_constant_order,
    policy_from_config,
    stationary_cost,
)
from lostsales.rng import child_stream


def test_stationary_cost_two_point(two_point):
    sol = stationary_waiting(two_point, 0.5)
    assert stationary_cost(two_point, 1, 1, 0.5) == pytest.approx(sol.mean + 0.5)
    with pytest.raises(RateTooHigh):
        stationary_cost(two_point, 1, 1, 1.0)


def test_zero_rate_costs_all_demand(two_point):
    assert stationary_cost(two_point, 3.0, 1.0, 0) == pytest.approx(3.0)


@pytest.mark.parametrize("c", [1.0, 4.0, 19.0])
def test_z_search_matches_full_scan(geo1, c):
    zs = best_constant_z(geo1, c, 1.0)
    step = float(geo1.unit) / 4
    grid = np.arange(0, geo1.mean, step)
    full = [1.0 * stationary_waiting(geo1, v).mean - c * v for v in grid]
    i = int(np.argmin(np.round(full, 10)))
    assert zs.z == pytest.approx(grid[i])
    assert zs.cost == pytest.approx(full[i] + c * geo1.mean)


def test_z_cost_increases_with_penalty(geo1):
    costs = [best_constant_z(geo1, c, 1.0).cost for c in (1, 4, 9, 19)]
    assert costs == sorted(costs)


def test_constant_policy_orders(two_point):
    pol = make_constant_order(two_point, 0.5)
    assert pol.refinement == 2
    ctx = np.array([3])
    assert pol.orders(1, np.array([0]), np.zeros((1, 2), dtype=np.int64), 2, ctx).tolist() == [4]
    assert pol.order(SystemState(5, 0, (1, 1)), scale=2) == 1
    with pytest.raises(ValueError):
        pol.start(np.random.default_rng(0), 1, 3)


def test_constant_policy_rejects(two_point):
    with pytest.raises(RateTooHigh):
        make_constant_order(two_point, 1.0)
    with pytest.raises(ValueError):
        make_constant_order(two_point, 0.5, stationary_waiting(two_point, 0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 12), st.integers(0, 12), st.lists(st.integers(0, 6), min_size=1, max_size=4))
def test_base_stock_order_up_to(S, inv, pipe):
    pol = make_base_stock(S, from_pmf([0, 1], [0.5, 0.5]))
    a = pol.order(SystemState(1, inv, tuple(pipe)))
    assert a == max(0, S - inv - sum(pipe))


def test_base_stock_fractional_refinement():
    pol = make_base_stock(2.5, from_pmf([0, 1], [0.5, 0.5]))
    assert pol.refinement == 2
    with pytest.raises(ValueError):
        make_base_stock(-1)


def test_exact_orders_branches_sum_to_one(two_point):
    pol = make_constant_order(two_point, 0.5)
    br = pol.exact_orders(1, np.arange(3), (0,), 2)
    assert sum(p for p, _ in br) == pytest.approx(1.0)
    assert all(a.tolist() == [a[0]] * 3 for _, a in br)
    later = pol.exact_orders(2, np.arange(3), (0,), 2)
    assert len(later) == 1 and later[0][1].tolist() == [1, 1, 1]


def test_policy_from_config(geo1):
    assert policy_from_config({"kind": "constant", "r": 0.5}, geo1).r == 0.5
    assert policy_from_config({"kind": "base_stock", "S": 3}, geo1).S == 3
    pol = policy_from_config({"kind": "best_constant"}, geo1, 4.0, 1.0)
    assert pol.r == best_constant_z(geo1, 4.0, 1.0).z
    with pytest.raises(ConfigError):
        policy_from_config({"kind": "magic"}, geo1)


def test_system_state_rejects_negative():
    with pytest.raises(ValueError):
        SystemState(1, -1, (0,))



def test_orders_depend_only_on_the_past(geo1):
    from lostsales.sim import run_paths

    L, T, cut = 2, 30, 12
    rng = child_stream(0, "admissible")
    a = rng.integers(0, geo1.max_atom + 1, T + L)
    b = a.copy()
    b[cut:] = rng.integers(0, geo1.max_atom + 1, T + L - cut)
    for pol in (make_constant_order(geo1, 0.75), make_base_stock(3, geo1)):
        s = pol.refinement
        # same stream for both rows' first-order draws: run each row with an identical context
        ra = run_paths(pol, a[None, :] * s, L, T, s, child_stream(1, "first"))
        rb = run_paths(pol, b[None, :] * s, L, T, s, child_stream(1, "first"))
        # the order in period t sees demands of periods 1..t-1 only
        assert np.array_equal(ra["order"][0, : cut + 1], rb["order"][0, : cut + 1])


def test_constant_policy_inventory_is_stationary(two_point):
    from scipy.stats import chi2_contingency

    from lostsales.demand import sample_index
    from lostsales.sim import run_paths

    L, T, reps = 2, 500, 20_000
    pol = make_constant_order(two_point, 0.5)
    stream = child_stream(2, "stationary")
    dem = two_point.atoms[sample_index(two_point, stream, (reps, T + L))] * 2
    rec = run_paths(pol, dem, L, T, 2, stream)
    # end-of-period inventory of period L+k (the one charged holding cost), lumped above 8 ticks
    table = np.array([np.bincount(np.minimum(rec["I_next"][:, L + k - 1], 8), minlength=9) for k in (1, 50, 500)])
    table = table[:, table.sum(axis=0) > 0]
    assert chi2_contingency(table).pvalue > 1e-3
