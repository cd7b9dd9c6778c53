"""Estimated transition rates and option prices in a semi-Markov regime-switching market.

Typical flow::

    model = three_regime_model()
    hist = simulate_history(model, 2000.0, seed=1)
    est = estimate_rate(hist, build_grid(2000.0, 0.3), model.num_states)
    rate = smooth(est, pricing_horizon=1.0)
    surface = solve_pde(three_regime_market(), rate, PriceGrid.from_steps(1.0, 1 / 500, 8.0, 0.004))

States are numbered from 0 in the API and from 1 in every file format.
"""
from .estimation import (DEFAULT_ALPHA, EstimationGrid, StepRateEstimate, build_grid, count_statistics,
                         error_norms, estimate_rate, project_true_rate, read_estimate, write_estimate)
from .experiment import (ConvergenceReport, ExperimentPlan, emit_plots, fit_log_trend, price_error,
                         run_price_convergence, run_rate_convergence)
from .pricing import (PriceGrid, PriceSurface, black_scholes_call, monte_carlo_price, price_at, solve_pde)
from .semi_markov import (CensoredHistory, ConstantRate, MarketParams, RateFunction, SemiMarkovModel,
                          discount_factor, hazard_from_model, three_regime_market, three_regime_model,
                          read_history, simulate_asset_path, simulate_history, write_history)
from .spline import (SmoothedRate, bspline_basis, smooth, sup_distance_to_step, validate_tba_conditions)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
