import math

import numpy as np
import pytest

from regime_price import (ConvergenceReport, ExperimentPlan, emit_plots, fit_log_trend, hazard_from_model,
                          price_error, run_price_convergence, run_rate_convergence)
from regime_price.experiment import ConvergenceRow

COARSE = {"delta_t": 1 / 100, "s_max": 8.0, "delta_s": 0.02}


def test_exact_log_trend():
    taus = [100, 400, 2000, 8000]
    a, b, res = fit_log_trend([(t, 3 - 0.5 * math.log(t)) for t in taus])
    assert (a, b) == (pytest.approx(3.0), pytest.approx(-0.5))
    assert res < 1e-12


def test_two_points_interpolate():
    a, b, res = fit_log_trend([(10, 1.0), (100, 0.5)])
    assert a + b * math.log(10) == pytest.approx(1.0) and res < 1e-12


def test_degenerate_fit_rejected():
    with pytest.raises(ValueError):
        fit_log_trend([(10, 1.0), (10, 0.5)])


def test_plan_invariants(model, market):
    with pytest.raises(ValueError):
        ExperimentPlan(model, market, tau_schedule=(100, 50))
    with pytest.raises(ValueError):
        ExperimentPlan(model, market, tau_schedule=(0.5, 10))
    with pytest.raises(ValueError):
        ExperimentPlan(model, market, alpha=0.5)
    with pytest.raises(ValueError):
        ExperimentPlan(model, market, tau_schedule=(10, 20), seeds=[1])
    plan = ExperimentPlan(model, market, seed=3)
    assert plan.seed_for(0) != plan.seed_for(1)
    assert plan.seed_for(2) == ExperimentPlan(model, market, seed=3).seed_for(2)


def test_nested_histories_are_truncations(model, market):
    plan = ExperimentPlan(model, market, tau_schedule=(50, 200), nested=True, seed=4)
    short, long = plan.histories()
    n = short.num_transitions
    assert np.array_equal(short.states, long.states[: n + 1])


def test_rate_report_structure(model, market):
    plan = ExperimentPlan(model, market, tau_schedule=(100, 500, 2000, 8000), seed=2024)
    rep = run_rate_convergence(plan)
    assert {k for k, _ in rep.keys()} == {"rate_vs_projection", "rate_vs_true", "smoothed_vs_true"}
    for kind in ("rate_vs_projection", "rate_vs_true", "smoothed_vs_true"):
        rows = rep.series(kind)
        assert [r.tau for r in rows] == [100, 500, 2000, 8000]
        a, b, res = rep.trends[(kind, None, "sup")]
        assert b < 0 and res >= 0


def test_single_horizon_is_flagged(model, market):
    rep = run_rate_convergence(ExperimentPlan(model, market, tau_schedule=(300,)))
    assert len(rep.series("rate_vs_true")) == 1
    assert all(v is None for v in rep.trends.values())
    assert rep.warnings


def test_self_difference_is_zero(model, market, coarse_true_surface):
    plan = ExperimentPlan(model, market, solver=COARSE)
    res = price_error(plan, 100.0, 0, true_surface=coarse_true_surface, rate=hazard_from_model(model))
    assert np.all(res.sup == 0.0) and np.all(res.l2 == 0.0)
    assert res.rate_sup_error == 0.0


def test_price_error_below_linear_growth_ceiling(model, market, coarse_true_surface):
    plan = ExperimentPlan(model, market, solver=COARSE)
    res = price_error(plan, 500.0, 17, true_surface=coarse_true_surface)
    k1, k2, s_hi, theta = market.strike, 1.0, 5.0, model.num_states
    assert res.tba.passed and not res.flagged
    assert np.all(res.sup <= (k1 + k2 * s_hi) * res.rate_sup_error * market.maturity * theta)
    assert np.all(res.sup > 0)


def test_price_error_requires_long_horizon(model, market):
    plan = ExperimentPlan(model, market, solver=COARSE)
    with pytest.raises(ValueError):
        price_error(plan, 0.5, 0)


def test_rate_continuity_at_long_horizon(model, market, fine_true_surface):
    # one history gives a random error; across five independent histories the typical size stays below 2e-3
    plan = ExperimentPlan(model, market)
    sups = [price_error(plan, 8000.0, 1000 + k, true_surface=fine_true_surface).sup.max() for k in range(5)]
    assert np.median(sups) < 2e-3


def _report():
    rep = ConvergenceReport()
    for tau, e in ((100, 0.9), (1000, 0.5), (8000, 0.3)):
        rep.rows.append(ConvergenceRow("rate_vs_projection", tau, e, e / 2))
    rep.fit_trends()
    return rep


def test_report_csv(tmp_path):
    rep = _report()
    rep.rows.append(ConvergenceRow("price", 100, 0.01, 0.005, state=2))
    rep.fit_trends()
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "kind,tau,state,sup_error,l2_error,trend_a,trend_b"
    assert lines[-1] == "rate_vs_projection,8000,,0.3,0.15," + ",".join(
        f"{x:.9g}" for x in rep.trends[("rate_vs_projection", None, "sup")][:2])
    assert "price,100,3,0.01,0.005,," in lines


def test_plots(tmp_path):
    with pytest.raises(ValueError):
        emit_plots(ConvergenceReport(), tmp_path)
    rep = _report()
    (path,) = emit_plots(rep, tmp_path / "a")
    assert path.name == "rate_convergence.svg"
    svg = path.read_text()
    assert "Convergence of MLE" in svg and "observation horizon tau" in svg
    (again,) = emit_plots(rep, tmp_path / "b")
    assert again.read_bytes() == path.read_bytes()


def test_price_sweep_is_deterministic(tmp_path, model, market):
    plan = ExperimentPlan(model, market, tau_schedule=(100, 400), solver=COARSE, seed=5)
    out = []
    for name in ("x", "y"):
        rep = run_price_convergence(plan)
        rep.write_csv(tmp_path / f"{name}.csv")
        emit_plots(rep, tmp_path / name)
        out.append(((tmp_path / f"{name}.csv").read_bytes(), (tmp_path / name / "price_convergence.svg").read_bytes()))
    assert out[0] == out[1]
    rows = [r for r in rep.rows if r.kind == "price"]
    assert sorted({r.state for r in rows}) == [0, 1, 2]
    assert len(rep.series("price_max")) == 2
