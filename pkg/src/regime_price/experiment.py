"""Convergence experiments: rate estimator and approximate price versus horizon."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .estimation import DEFAULT_ALPHA, build_grid, error_norms, estimate_rate, project_true_rate
from .pricing import PriceGrid, PriceSurface, solve_pde
from .semi_markov import MarketParams, RateFunction, SemiMarkovModel, hazard_from_model, simulate_history
from .spline import TBAReport, smooth, validate_tba_conditions

log = logging.getLogger(__name__)

DEFAULT_TAU_SCHEDULE = (100.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0)
RATE_KINDS = ("rate_vs_projection", "rate_vs_true", "smoothed_vs_true")
PRICE_KINDS = ("price", "price_max")


@dataclass
class ExperimentPlan:
    model: SemiMarkovModel
    market: MarketParams
    tau_schedule: Sequence[float] = DEFAULT_TAU_SCHEDULE
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    seeds: Optional[Sequence[int]] = None
    rate_interval: float = 4.0
    spot_interval: tuple = (0.0, 5.0)
    solver: dict = field(default_factory=lambda: {"delta_t": 1 / 500, "s_max": 8.0, "delta_s": 0.004})
    nested: bool = False
    norm_samples: int = 2001

    def __post_init__(self):
        taus = [float(t) for t in self.tau_schedule]
        if not taus:
            raise ValueError("tau_schedule is empty")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("tau_schedule must be strictly increasing")
        if taus[0] < self.market.maturity:
            raise ValueError("every horizon must be at least the option maturity")
        if self.seeds is not None and len(self.seeds) != len(taus):
            raise ValueError("need one seed per horizon")
        self.tau_schedule = tuple(taus)
        build_grid(taus[0], self.alpha)  # validates alpha

    def seed_for(self, index: int) -> int:
        if self.seeds is not None:
            return int(self.seeds[index])
        return int(np.random.SeedSequence([int(self.seed), index]).generate_state(1)[0])

    def price_grid(self) -> PriceGrid:
        cfg = dict(self.solver)
        extra = {k: cfg[k] for k in ("rannacher_steps", "store_stride") if k in cfg}
        return PriceGrid.from_steps(self.market.maturity, cfg["delta_t"], cfg.get("s_max", 8.0 * self.market.strike),
                                    cfg["delta_s"], theta=cfg.get("theta_scheme", 0.5), **extra)

    def histories(self):
        """One censored history per horizon (independent, or nested truncations)."""
        if self.nested:
            full = simulate_history(self.model, self.tau_schedule[-1], self.seed)
            return [full.truncate(t) for t in self.tau_schedule]
        return [simulate_history(self.model, t, self.seed_for(k)) for k, t in enumerate(self.tau_schedule)]


@dataclass
class ConvergenceRow:
    kind: str
    tau: float
    sup_error: float
    l2_error: float
    state: Optional[int] = None
    flagged: bool = False


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    trends: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def series(self, kind: str, state: Optional[int] = None):
        rows = sorted((r for r in self.rows if r.kind == kind and r.state == state), key=lambda r: r.tau)
        return rows

    def keys(self):
        seen = []
        for r in self.rows:
            if (r.kind, r.state) not in seen:
                seen.append((r.kind, r.state))
        return seen

    def fit_trends(self) -> None:
        self.rows.sort(key=lambda r: (r.kind, -1 if r.state is None else r.state, r.tau))
        for kind, state in self.keys():
            rows = self.series(kind, state)
            for norm in ("sup", "l2"):
                pts = [(r.tau, r.sup_error if norm == "sup" else r.l2_error) for r in rows]
                if len({t for t, _ in pts}) < 2:
                    self.trends[(kind, state, norm)] = None
                    msg = f"{kind} (state {state}): one horizon only, no trend fitted"
                    if msg not in self.warnings:
                        self.warnings.append(msg)
                        log.warning(msg)
                else:
                    self.trends[(kind, state, norm)] = fit_log_trend(pts)

    def slope(self, kind: str, norm: str = "sup", state: Optional[int] = None) -> float:
        fit = self.trends.get((kind, state, norm))
        if fit is None:
            raise KeyError(f"no trend for {kind}/{state}/{norm}")
        return fit[1]

    def merge(self, other: "ConvergenceReport") -> "ConvergenceReport":
        out = ConvergenceReport(self.rows + other.rows, {}, self.warnings + other.warnings)
        out.fit_trends()
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "tau", "state", "sup_error", "l2_error", "trend_a", "trend_b"])
            for r in self.rows:
                fit = self.trends.get((r.kind, r.state, "sup"))
                a, b = ("", "") if fit is None else (f"{fit[0]:.9g}", f"{fit[1]:.9g}")
                state = "" if r.state is None else r.state + 1
                w.writerow([r.kind, f"{r.tau:.9g}", state, f"{r.sup_error:.9g}", f"{r.l2_error:.9g}", a, b])


def fit_log_trend(rows):
    """Least squares ``error ~ a + b ln(tau)``; returns ``(a, b, residual_norm)``."""
    tau = np.array([r[0] for r in rows], dtype=float)
    err = np.array([r[1] for r in rows], dtype=float)
    if len(np.unique(tau)) < 2 or np.any(tau <= 0):
        raise ValueError("need at least two distinct positive horizons")
    design = np.column_stack([np.ones_like(tau), np.log(tau)])
    coef, *_ = np.linalg.lstsq(design, err, rcond=None)
    resid = float(np.linalg.norm(design @ coef - err))
    return float(coef[0]), float(coef[1]), resid


def run_rate_convergence(plan: ExperimentPlan) -> ConvergenceReport:
    """Sup and L2 errors of the step MLE and its spline smoothing for every horizon."""
    true_rate = hazard_from_model(plan.model)
    interval = (0.0, plan.rate_interval)
    report = ConvergenceReport()
    n = plan.model.num_states
    for tau, hist in zip(plan.tau_schedule, plan.histories()):
        grid = build_grid(tau, plan.alpha)
        est = estimate_rate(hist, grid, n)
        proj = project_true_rate(true_rate, grid)
        smoothed = smooth(est, min(plan.rate_interval, tau))
        for kind, a, b in (("rate_vs_projection", est, proj), ("rate_vs_true", est, true_rate),
                           ("smoothed_vs_true", smoothed, true_rate)):
            sup, l2 = error_norms(a, b, interval, plan.norm_samples)
            report.rows.append(ConvergenceRow(kind, tau, sup, l2))
        log.info("rate tau=%g sup(hat-star)=%.4g", tau, report.rows[-3].sup_error)
    report.fit_trends()
    return report


@dataclass
class PriceError:
    tau: float
    sup: np.ndarray
    l2: np.ndarray
    tba: Optional[TBAReport]
    flagged: bool
    rate_sup_error: float


def _psi_norms(true_surface: PriceSurface, approx_surface: PriceSurface, spot_interval):
    spots = true_surface.grid.spots
    keep = (spots >= spot_interval[0] - 1e-12) & (spots <= spot_interval[1] + 1e-12)
    psi = true_surface.initial()[:, keep] - approx_surface.initial()[:, keep]
    sup = np.abs(psi).max(axis=1)
    l2 = np.sqrt(np.trapezoid(psi ** 2, spots[keep], axis=1))
    return sup, l2


def price_error(plan: ExperimentPlan, tau: float, seed: int, true_surface: Optional[PriceSurface] = None,
                rate: Optional[RateFunction] = None, history=None) -> PriceError:
    """Norms of ``phi(0, ., i, 0) - phi_tilde(0, ., i, 0)`` on the spot window, per state.

    ``rate`` replaces the smoothed estimate (the self-difference control passes
    the true rate).  Both solves share one grid.
    """
    if tau < plan.market.maturity:
        raise ValueError("tau must be at least the maturity")
    grid = plan.price_grid()
    true_rate = hazard_from_model(plan.model)
    if true_surface is None:
        true_surface = solve_pde(plan.market, true_rate, grid)
    tba = None
    flagged = False
    if rate is None:
        if history is None:
            history = simulate_history(plan.model, tau, seed)
        est = estimate_rate(history, build_grid(tau, plan.alpha), plan.model.num_states)
        rate = smooth(est, plan.market.maturity)
        tba = validate_tba_conditions(rate)
        if not tba.passed:
            flagged = True
            log.warning("tau=%g: TBA sufficient conditions fail (%s)", tau, tba.to_dict())
    approx = solve_pde(plan.market, rate, grid)
    sup, l2 = _psi_norms(true_surface, approx, plan.spot_interval)
    rate_err, _ = error_norms(rate, true_rate, (0.0, plan.market.maturity), plan.norm_samples)
    return PriceError(tau, sup, l2, tba, flagged, rate_err)


def run_price_convergence(plan: ExperimentPlan, keep_details: bool = False):
    """Per-state and max-over-state price errors for every horizon."""
    true_surface = solve_pde(plan.market, hazard_from_model(plan.model), plan.price_grid())
    report = ConvergenceReport()
    details = []
    for k, (tau, hist) in enumerate(zip(plan.tau_schedule, plan.histories())):
        res = price_error(plan, tau, plan.seed_for(k), true_surface, history=hist)
        details.append(res)
        for i in range(plan.market.num_states):
            report.rows.append(ConvergenceRow("price", tau, float(res.sup[i]), float(res.l2[i]), i, res.flagged))
        report.rows.append(ConvergenceRow("price_max", tau, float(res.sup.max()), float(res.l2.max()),
                                          None, res.flagged))
        log.info("price tau=%g sup=%s", tau, np.array2string(res.sup, precision=4))
    report.fit_trends()
    return (report, details) if keep_details else report


_TITLES = {"rate": "Convergence of MLE", "price": "Convergence of approximation error"}
_LABELS = {
    "rate_vs_projection": "step MLE vs projected rate",
    "rate_vs_true": "step MLE vs true rate",
    "smoothed_vs_true": "spline vs true rate",
    "price": "price error",
    "price_max": "price error (max over states)",
}


def emit_plots(report: ConvergenceReport, directory) -> list:
    """One SVG per figure group present in the report; returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not report.rows:
        raise ValueError("report has no rows to plot")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    groups = {"rate": [k for k in report.keys() if k[0] in RATE_KINDS],
              "price": [k for k in report.keys() if k[0] in PRICE_KINDS]}
    written = []
    with matplotlib.rc_context({"svg.hashsalt": "regime-price", "svg.fonttype": "none"}):
        for group, keys in groups.items():
            if not keys:
                continue
            fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
            for ax, norm in zip(axes, ("sup", "l2")):
                for kind, state in keys:
                    rows = report.series(kind, state)
                    tau = np.array([r.tau for r in rows])
                    err = np.array([r.sup_error if norm == "sup" else r.l2_error for r in rows])
                    label = _LABELS[kind] + ("" if state is None else f", state {state + 1}")
                    pts = ax.plot(tau, err, "o", label=label)[0]
                    fit = report.trends.get((kind, state, norm))
                    if fit is not None:
                        grid = np.linspace(tau.min(), tau.max(), 200)
                        ax.plot(grid, fit[0] + fit[1] * np.log(grid), "-", color=pts.get_color(), lw=1)
                ax.set_xlabel("observation horizon tau")
                ax.set_ylabel(f"{'sup' if norm == 'sup' else 'L2'} norm of error")
                ax.set_xscale("log")
            axes[0].legend(fontsize=7)
            fig.suptitle(_TITLES[group])
            fig.tight_layout()
            path = directory / f"{group}_convergence.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
