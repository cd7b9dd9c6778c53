import numpy as np
import pytest

from regime_price import (CensoredHistory, SemiMarkovModel, StepRateEstimate, build_grid, count_statistics,
                          error_norms, estimate_rate, hazard_from_model, project_true_rate, read_estimate,
                          simulate_history, write_estimate)
from regime_price.experiment import ExperimentPlan, run_rate_convergence
from regime_price.semi_markov import ExponentialLaw, three_regime_market


def test_grid_arithmetic():
    g = build_grid(4.0, 0.25)
    assert g.num_cells == 5 and g.step == pytest.approx(0.8)
    assert np.allclose(g.knots, [0, 0.8, 1.6, 2.4, 3.2, 4.0])
    g = build_grid(100.0, 0.25)
    assert g.num_cells == 316 and g.step == pytest.approx(0.31646, abs=1e-5)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 0.6, -0.1])
def test_grid_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        build_grid(10.0, alpha)


def test_grid_rejects_nonpositive_tau():
    with pytest.raises(ValueError):
        build_grid(0.0, 0.3)


def test_cells_are_left_open():
    g = build_grid(4.0, 0.25)
    assert g.cell_of(0.0) == 0 and g.cell_of(0.8) == 0 and g.cell_of(0.8000001) == 1
    assert g.cell_of(4.0) == 4 and g.cell_of(4.5) == 5


def test_hand_trace_counts(hand_history):
    d, v = count_statistics(hand_history, build_grid(4.0, 0.25), 3)
    expected = np.zeros((3, 3, 5), dtype=np.int64)
    expected[0, 2, 0] = 1
    expected[2, 0, 1] = 1
    assert d.dtype.kind == "i" and np.array_equal(d, expected)
    assert np.allclose(v[0], [1.3, 0.8, 0.7, 0.0, 0.0], atol=1e-12, rtol=0)
    assert np.allclose(v[2], [0.8, 0.4, 0.0, 0.0, 0.0], atol=1e-12, rtol=0)
    assert np.all(v[1] == 0)


def test_hand_trace_rates(hand_history):
    est = estimate_rate(hand_history, build_grid(4.0, 0.25), 3)
    assert abs(est.values[0, 2, 0] - 1 / 1.3) < 1e-12
    assert abs(est.values[2, 0, 1] - 2.5) < 1e-12
    # y = 0 reads cell 0, cells without occupancy are zero
    assert est(0, 2, 0.0) == est.values[0, 2, 0]
    assert np.all(est.values[1] == 0) and est.values[0, 2, 4] == 0


def test_hand_trace_csv(tmp_path, hand_history):
    est = estimate_rate(hand_history, build_grid(4.0, 0.25), 3)
    path = tmp_path / "est.csv"
    write_estimate(est, path)
    lines = path.read_text().splitlines()
    assert lines[2] == "i,j,k,v_k,d,v,lambda_hat"
    assert "1,3,0,0,1,1.3,0.769230769" in lines
    back = read_estimate(path)
    assert back.grid == est.grid
    assert np.allclose(back.values, est.values, rtol=1e-8)


def test_empty_history():
    hist = CensoredHistory(np.array([1]), np.array([]), 4.0, 4.0)
    grid = build_grid(4.0, 0.25)
    d, v = count_statistics(hist, grid, 3)
    assert not d.any()
    assert np.allclose(v[1], grid.step) and not v[0].any() and not v[2].any()
    assert not estimate_rate(hist, grid, 3).values.any()


def test_mismatched_horizon_rejected(hand_history):
    with pytest.raises(ValueError):
        count_statistics(hand_history, build_grid(5.0, 0.25))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conservation(model, seed):
    hist = simulate_history(model, 300.0, seed)
    d, v = count_statistics(hist, build_grid(300.0, 0.3), 3)
    assert d.sum() == hist.num_transitions
    assert v.sum() == pytest.approx(300.0, abs=1e-9)
    for i in range(3):
        spent = hist.holding_times[hist.states[:-1] == i].sum() + (hist.backward_recurrence if hist.states[-1] == i else 0)
        assert v[i].sum() == pytest.approx(spent, abs=1e-9)
    assert np.all(estimate_rate(hist, build_grid(300.0, 0.3), 3).values >= 0)


def test_counts_against_brute_force(model):
    hist = simulate_history(model, 60.0, 9)
    grid = build_grid(60.0, 0.3)
    d, v = count_statistics(hist, grid, 3)
    kn = grid.knots
    d_ref = np.zeros_like(d)
    v_ref = np.zeros_like(v)
    lengths = list(hist.holding_times) + [hist.backward_recurrence]
    for l, y in enumerate(lengths):
        i = hist.states[l]
        v_ref[i] += np.clip(np.minimum(y, kn[1:]) - kn[:-1], 0, None)
        if l < hist.num_transitions:
            k = int(np.flatnonzero((kn[:-1] < y) & (y <= kn[1:]))[0])
            d_ref[i, hist.states[l + 1], k] += 1
    assert np.array_equal(d, d_ref)
    assert np.allclose(v, v_ref, atol=1e-12)


def test_projection_examples(model):
    proj = project_true_rate(hazard_from_model(model), build_grid(4.0, 0.25))
    assert proj.values[0, 2, 1] == pytest.approx(0.9 * 0.8 / 1.8, abs=1e-15)
    assert np.all(proj.values[..., 0] == 0)
    const = StepRateEstimate(build_grid(4.0, 0.25), np.full((2, 2, 5), 0.7) * (1 - np.eye(2))[..., None])
    from regime_price.semi_markov import ConstantRate
    assert np.allclose(project_true_rate(ConstantRate([[0, 0.7], [0.7, 0]]), const.grid).values, const.values)


def test_step_cumulative_is_exact(hand_history):
    est = estimate_rate(hand_history, build_grid(4.0, 0.25), 3)
    # state 1: 1/1.3 on (0, 0.8]
    assert est.cumulative(0, 0.5) == pytest.approx(0.5 / 1.3)
    assert est.cumulative(2, 1.2) == pytest.approx(2.5 * 0.4)
    assert est.cumulative(0, 0.0) == 0.0


def test_error_norm_examples(model):
    rate = hazard_from_model(model)
    assert error_norms(rate, rate, (0, 4)) == (0.0, 0.0)
    from regime_price.semi_markov import ConstantRate
    zero = ConstantRate(np.zeros((2, 2)))
    c = ConstantRate([[0, 0.4], [0.4, 0]])
    sup, l2 = error_norms(zero, c, (0, 1))
    assert sup == pytest.approx(0.4) and l2 == pytest.approx(0.4)
    sup, l2, pair_sup, pair_l2 = error_norms(zero, c, (0, 1), per_pair=True)
    assert pair_sup[0, 1] == pytest.approx(0.4) and pair_l2[1, 0] == pytest.approx(0.4)


def test_error_norm_catches_step_edges():
    # the jump sits strictly between uniform samples; per-cell sampling still sees it
    grid = build_grid(3.0, 0.2)
    vals = np.zeros((2, 2, grid.num_cells))
    vals[0, 1, 1] = 1.0
    spike = StepRateEstimate(grid, vals)
    zero = StepRateEstimate(grid, np.zeros_like(vals))
    assert error_norms(spike, zero, (0, 3), samples=2)[0] == 1.0


def _markov_model(q=0.5):
    law = (ExponentialLaw(q),) * 2
    return SemiMarkovModel(np.array([[0.0, 1.0], [1.0, 0.0]]), law, np.array([0.5, 0.5]))


def test_markov_case_cells_within_fifteen_percent():
    # constant hazard q = 0.5; wide cells (alpha = 0.05) hold several hundred jumps each on [0, T]
    q, T = 0.5, 1.0
    grid = build_grid(1e4, 0.05)
    est = estimate_rate(simulate_history(_markov_model(q), 1e4, 21), grid, 2)
    cells = np.flatnonzero(grid.knots[:-1] < T)
    assert np.all(np.abs(est.values[0, 1, cells] / q - 1) < 0.15)
    assert np.all(np.abs(est.values[1, 0, cells] / q - 1) < 0.15)


def test_markov_case_harness_sup_error():
    q = 0.5
    market = type(three_regime_market())(rates=[0.3, 0.6], volatilities=[0.2, 0.2], strike=1.0, maturity=1.0)
    plan = ExperimentPlan(_markov_model(q), market, tau_schedule=(1e4,), alpha=0.05, seed=1, rate_interval=1.0)
    rep = run_rate_convergence(plan)
    (row,) = rep.series("rate_vs_true")
    assert row.sup_error < 0.15 * q
    assert rep.trends[("rate_vs_true", None, "sup")] is None
    assert any("one horizon" in w for w in rep.warnings)
