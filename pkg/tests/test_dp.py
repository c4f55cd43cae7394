import math
from functools import lru_cache

import numpy as np
import pytest

from lostsales.demand import from_pmf, newsvendor, truncate_family
from lostsales.dp import (
    DPConfig,
    TablePolicy,
    evaluate_policy,
    exact_forward,
    forward_table,
    load_table,
    opt_ratio,
    solve,
)
from lostsales.errors import CapTooTight, StateBudgetExceeded
from lostsales.policy import best_constant_z, make_base_stock, make_constant_order
from lostsales.rng import child_stream


def _brute(d, c, h, L, T, cap):
    """Optimal expected window cost by recursion over full histories (no DP state reduction)."""
    atoms, probs, u = [int(a) for a in d.atoms], list(d.probs), float(d.unit)

    @lru_cache(maxsize=None)
    def v(t, inv, pipe):
        if t > T + L:
            return 0.0
        acts = range(cap + 1) if t <= T else (0,)
        best = math.inf
        for a in acts:
            y = inv + pipe[0]
            tot = 0.0
            for D, p in zip(atoms, probs):
                cost = u * (h * max(y - D, 0) + c * max(D - y, 0)) if t > L else 0.0
                tot += p * (cost + v(t + 1, max(y - D, 0), pipe[1:] + (a,)))
            best = min(best, tot)
        return best

    return v(1, 0, (0,) * L)


CASES = [
    (from_pmf([0, 2], [0.5, 0.5]), 1.0, 1.0, 1, 3),
    (from_pmf([0, 2], [0.5, 0.5]), 4.0, 1.0, 2, 5),
    (from_pmf([0, 1, 3], [0.3, 0.4, 0.3]), 9.0, 2.0, 2, 5),
    (from_pmf([0, 1, 2], [0.2, 0.5, 0.3]), 3.0, 1.0, 3, 5),
]


@pytest.mark.parametrize("d, c, h, L, T", CASES)
def test_dp_matches_brute_force(d, c, h, L, T):
    opt, tab = solve(d, c, h, DPConfig(L, T))
    cap = newsvendor(d, c, h).Q_units + 2
    assert opt == pytest.approx(_brute(d, c, h, L, T, cap), rel=1e-9)
    # newsvendor floor and the constant-order upper bound
    assert opt >= T * newsvendor(d, c, h).g - 1e-9
    zs = best_constant_z(d, c, h)
    pz = exact_forward(make_constant_order(d, zs.z, zs.sup_sol), d, c, h, L, T)[L:].sum()
    assert opt <= pz + 1e-9


@pytest.mark.parametrize("d, c, h, L, T", CASES[:3])
def test_forward_pass_reproduces_opt(d, c, h, L, T):
    opt, tab = solve(d, c, h, DPConfig(L, T))
    costs, clip = forward_table(tab, d, c, h)
    assert costs[L:].sum() == pytest.approx(opt, rel=1e-10)
    assert np.all(costs[:L] == 0)
    assert clip < 1e-12
    assert tab.value(1, 0, (0,) * L) == pytest.approx(opt)


def test_table_policy_mc_matches_opt(two_point):
    opt, tab = solve(two_point, 4.0, 1.0, DPConfig(2, 6))
    s = evaluate_policy(TablePolicy(tab), two_point, 4.0, 1.0, 2, 6, exact=False, reps=40_000,
                        stream=child_stream(0, "tab"))
    assert abs(s.mean - opt) < 4 * s.stderr


def test_save_load_and_tamper(tmp_path, two_point):
    opt, tab = solve(two_point, 4.0, 1.0, DPConfig(2, 5))
    p = tmp_path / "t.npz"
    tab.save(p)
    back = load_table(p)
    assert back.opt == opt and back.checksum() == tab.checksum()
    assert all(np.array_equal(a, b) for a, b in zip(back.actions, tab.actions))
    assert back.action(1, 0, (0, 0)) == tab.action(1, 0, (0, 0))
    arrays = dict(np.load(p))
    arrays["actions_1"] = arrays["actions_1"] + 1
    np.savez_compressed(p, **arrays)
    with pytest.raises(ValueError, match="checksum"):
        load_table(p)


def test_actions_are_int16(two_point):
    _, tab = solve(two_point, 4.0, 1.0, DPConfig(2, 5))
    assert all(a.dtype == np.int16 for a in tab.actions)
    assert tab.action(6, 0, (0, 0)) == 0


def test_cap_too_tight(two_point):
    with pytest.raises(CapTooTight):
        solve(two_point, 9.0, 1.0, DPConfig(2, 6, inventory_cap=2))


def test_state_budget(geo1):
    with pytest.raises(StateBudgetExceeded):
        solve(geo1, 9.0, 1.0, DPConfig(4, 6, state_budget=1000))


def test_config_validation():
    with pytest.raises(ValueError):
        DPConfig(3, 3)
    with pytest.raises(ValueError):
        DPConfig(1, 3, order_step=0)


def test_cap_doubling_recorded(two_point):
    _, tab = solve(two_point, 4.0, 1.0, DPConfig(2, 5))
    assert tab.cap_check["relative_change"] < 1e-6


def test_exact_forward_vs_mc(two_point):
    zs = best_constant_z(two_point, 4.0, 1.0)
    pol = make_constant_order(two_point, zs.z, zs.sup_sol)
    ex = evaluate_policy(pol, two_point, 4.0, 1.0, 2, 8)
    mc = evaluate_policy(pol, two_point, 4.0, 1.0, 2, 8, exact=False, reps=50_000, stream=child_stream(0, "pz"))
    assert abs(ex.mean - mc.mean) < 4 * mc.stderr


def test_exact_forward_base_stock_vs_mc(geo1):
    pol = make_base_stock(3, geo1)
    ex = evaluate_policy(pol, geo1, 4.0, 1.0, 2, 6)
    mc = evaluate_policy(pol, geo1, 4.0, 1.0, 2, 6, exact=False, reps=50_000, stream=child_stream(1, "bs"))
    assert abs(ex.mean - mc.mean) < 4 * mc.stderr


def test_ratio_at_least_one(two_point):
    res = opt_ratio(two_point, 4.0, 1.0, 2, 6)
    assert res.ratio >= 1 - 1e-12
    assert res.ratio == pytest.approx(res.cost_pi_z / res.opt)
