import math

import numpy as np
import pytest

from regime_price import (MarketParams, PriceGrid, black_scholes_call, hazard_from_model, monte_carlo_price,
                          price_at, solve_pde)
from regime_price.semi_markov import ConstantRate

NO_SWITCH = ConstantRate(np.zeros((1, 1)))


def test_black_scholes_examples():
    assert black_scholes_call(1.0, 1.0, 0.3, 0.2, 1.0) == pytest.approx(0.264208, abs=5e-7)
    assert black_scholes_call(1.4, 1.0, 0.3, 0.2, 0.0) == pytest.approx(0.4)
    assert black_scholes_call(0.6, 1.0, 0.3, 0.2, 0.0) == 0.0
    assert black_scholes_call(0.0, 1.0, 0.3, 0.2, 1.0) == 0.0


@pytest.fixture(scope="module")
def single_surface(single_market, coarse_grid):
    return solve_pde(single_market, NO_SWITCH, coarse_grid)


def test_single_regime_coarse_grid(single_surface, single_market):
    s = single_surface.grid.spots
    keep = (s >= 0.5) & (s <= 2.0)
    bs = black_scholes_call(s[keep], 1.0, 0.3, 0.2, 1.0)
    assert np.max(np.abs(single_surface.initial(0)[keep] - bs)) < 5e-4


def test_terminal_slice_and_zero_spot(coarse_true_surface):
    v = coarse_true_surface.values
    s = coarse_true_surface.grid.spots
    L = coarse_true_surface.levels
    for b in range(L + 1):
        assert np.array_equal(v[L, b], np.broadcast_to(np.maximum(s - 1.0, 0.0), v[L, b].shape))
    finite = ~np.isnan(v[..., 0])
    assert np.all(v[..., 0][finite] == 0.0)


def test_domain_is_y_at_most_t(coarse_true_surface):
    v = coarse_true_surface.values
    a, b = np.indices(v.shape[:2])
    assert np.all(np.isnan(v[b > a])) and not np.any(np.isnan(v[b <= a]))


def test_shape_constraints(coarse_true_surface, market):
    v = coarse_true_surface.values
    h = coarse_true_surface.lattice_step
    s = coarse_true_surface.grid.spots
    r_min = market.rates.min()
    for a in range(v.shape[0]):
        tau = market.maturity - a * h
        lower = np.maximum(s - market.strike * math.exp(-r_min * tau), 0.0)
        for b in range(a + 1):
            phi = v[a, b]
            assert np.all(np.diff(phi, axis=-1) >= -1e-12)
            assert np.all(phi >= -1e-12) and np.all(phi <= s + 1e-9)
            assert np.all(phi <= market.strike + s)
            assert np.all(phi >= lower - 1e-3)


def test_nonincreasing_in_strike(model, market, coarse_grid, coarse_true_surface):
    higher = MarketParams(market.rates, market.volatilities, 1.2, market.maturity)
    other = solve_pde(higher, hazard_from_model(model), coarse_grid)
    assert np.all(other.initial() <= coarse_true_surface.initial() + 1e-12)


def test_price_at_lattice_and_interpolation(coarse_true_surface):
    surf = coarse_true_surface
    h = surf.lattice_step
    s = surf.grid.spots
    v = surf.values
    assert price_at(surf, 2 * h, s[40], 1, h) == v[2, 1, 1, 40]
    assert price_at(surf, 1.0, 1.3, 2, 0.5) == pytest.approx(0.3, abs=1e-12)
    mid = price_at(surf, 0.0, 0.5 * (s[40] + s[41]), 0, 0.0)
    assert mid == pytest.approx(0.5 * (v[0, 0, 0, 40] + v[0, 0, 0, 41]), rel=1e-14)
    with pytest.raises(ValueError):
        price_at(surf, 0.2, 1.0, 0, 0.5)
    with pytest.raises(ValueError):
        price_at(surf, 0.5, 9.0, 0, 0.1)


def test_solver_rejects_bad_setups(model, market, single_market):
    with pytest.raises(ValueError, match="s_max"):
        solve_pde(market, hazard_from_model(model), PriceGrid.from_steps(1.0, 0.01, 2.0, 0.02))
    with pytest.raises(ValueError, match="sup lambda"):
        solve_pde(market, ConstantRate(np.full((3, 3), 50.0) * (1 - np.eye(3))),
                  PriceGrid.from_steps(1.0, 0.05, 8.0, 0.02))
    with pytest.raises(ValueError, match="disagree"):
        solve_pde(single_market, hazard_from_model(model), PriceGrid.from_steps(1.0, 0.01, 8.0, 0.02))
    with pytest.raises(ValueError):
        PriceGrid.from_steps(1.0, 0.3, 8.0, 0.02)


def test_markov_regimes_match_closed_form_system():
    # identical regimes: switching changes nothing, every state carries the Black-Scholes price
    market = MarketParams([0.3, 0.3], [0.2, 0.2], 1.0, 1.0)
    rate = ConstantRate([[0, 0.8], [1.3, 0]])
    surf = solve_pde(market, rate, PriceGrid.from_steps(1.0, 1 / 200, 8.0, 0.01))
    s = surf.grid.spots
    keep = (s >= 0.5) & (s <= 2.0)
    bs = black_scholes_call(s[keep], 1.0, 0.3, 0.2, 1.0)
    for i in range(2):
        assert np.max(np.abs(surf.initial(i)[keep] - bs)) < 5e-4


def test_monte_carlo_zero_volatility():
    market = MarketParams([0.3], [1e-6], 1.0, 1.0)
    price, se = monte_carlo_price(market, NO_SWITCH, 0.0, 1.0, 0, paths=1000, seed=1)
    assert price == pytest.approx(1 - math.exp(-0.3), abs=1e-4)


def test_monte_carlo_black_scholes(single_market):
    price, se = monte_carlo_price(single_market, NO_SWITCH, 0.0, 1.0, 0, paths=100_000, seed=2)
    assert abs(price - 0.264208) < 3 * se


def test_monte_carlo_zero_strike(model):
    market = MarketParams([0.3, 0.6, 0.7], [0.2, 0.2, 0.2], 0.0, 1.0)
    price, se = monte_carlo_price(market, hazard_from_model(model), 0.0, 1.3, 1, paths=20_000, seed=3)
    assert abs(price - 1.3) < 3 * se


def test_monte_carlo_rejects_few_paths(single_market):
    with pytest.raises(ValueError):
        monte_carlo_price(single_market, NO_SWITCH, 0.0, 1.0, 0, paths=50)


def test_monte_carlo_seeded(model, market):
    rate = hazard_from_model(model)
    a = monte_carlo_price(market, rate, 0.0, 1.0, 0, paths=500, seed=9)
    assert a == monte_carlo_price(market, rate, 0.0, 1.0, 0, paths=500, seed=9)


def test_aged_start_against_monte_carlo(model, market):
    # a point inside the domain with positive age exercises the age-conditioned regime law
    surf = solve_pde(market, hazard_from_model(model), PriceGrid.from_steps(1.0, 1 / 250, 8.0, 0.008, store_stride=25))
    for i in range(3):
        fd = price_at(surf, 0.4, 1.0, i, 0.4)
        mc, se = monte_carlo_price(market, hazard_from_model(model), 0.4, 1.0, i, y=0.4, paths=100_000, seed=40 + i)
        assert abs(fd - mc) < 3 * se


def test_surface_csv(tmp_path, single_market):
    surf = solve_pde(single_market, NO_SWITCH, PriceGrid.from_steps(1.0, 0.25, 4.0, 0.5, store_stride=2))
    path = tmp_path / "surface.csv"
    surf.write_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "t,s,i,y,phi"
    # levels t = 0, 0.5, 1 hold 1, 2 and 3 ages; 9 spot nodes each
    assert len(rows) == 1 + 6 * 9
    assert "1,1.5,1,0.5,0.5" in rows
