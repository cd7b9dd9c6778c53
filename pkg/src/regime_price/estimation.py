"""Nonparametric step-function MLE of age-dependent transition rates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .semi_markov import CensoredHistory, RateFunction

DEFAULT_ALPHA = 0.3


@dataclass(frozen=True)
class EstimationGrid:
    """Regular subdivision of ``[0, horizon]`` into ``floor(horizon**(1+alpha))`` cells."""

    horizon: float
    alpha: float
    num_cells: int

    @property
    def step(self) -> float:
        return self.horizon / self.num_cells

    @property
    def knots(self) -> np.ndarray:
        return self.horizon * np.arange(self.num_cells + 1) / self.num_cells

    def cell_of(self, y) -> np.ndarray:
        """Index ``k`` with ``y`` in ``(v_k, v_{k+1}]``; ``y = 0`` maps to cell 0.

        Values outside ``[0, horizon]`` map to -1 (left) or ``num_cells`` (right).
        """
        y = np.asarray(y, dtype=float)
        k = np.searchsorted(self.knots, y, side="left") - 1
        k = np.where(y == 0.0, 0, k)
        return np.where(y > self.horizon, self.num_cells, k)


def build_grid(tau: float, alpha: float = DEFAULT_ALPHA) -> EstimationGrid:
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie strictly inside (0, 1/2)")
    x = tau ** (1.0 + alpha)
    m = math.floor(x)
    # guard against pow() landing just below an exact integer
    if m + 1 - x < 1e-9 * x:
        m += 1
    if m < 1:
        raise ValueError("tau too small: the grid has no cells")
    return EstimationGrid(float(tau), float(alpha), int(m))


def _sojourns(history: CensoredHistory):
    """(state, length, destination) for every sojourn; destination -1 if censored."""
    x = history.states
    states = x.copy()
    lengths = np.append(history.holding_times, history.backward_recurrence)
    dest = np.append(x[1:], -1)
    return states, lengths, dest


def count_statistics(history: CensoredHistory, grid: EstimationGrid, num_states: Optional[int] = None):
    """Transition counts ``d[i, j, k]`` and occupancies ``v[i, k]``.

    ``d`` counts completed ``i -> j`` sojourns with length in ``(v_k, v_{k+1}]``;
    ``v`` accumulates ``(Y ^ v_{k+1} - v_k)`` over all state-``i`` sojourns
    longer than ``v_k``, the censored one included.
    """
    if abs(history.horizon - grid.horizon) > 1e-12 * max(1.0, grid.horizon):
        raise ValueError("history horizon does not match the grid horizon")
    n = int(history.states.max()) + 1 if num_states is None else int(num_states)
    m = grid.num_cells
    knots = grid.knots
    states, lengths, dest = _sojourns(history)

    v = np.zeros((n, m))
    d = np.zeros((n, n, m), dtype=np.int64)
    k = np.minimum(grid.cell_of(lengths), m - 1)
    nonzero = lengths > 0
    # full cells below the partial one
    full = np.zeros((n, m + 1))
    np.add.at(full, (states[nonzero], k[nonzero]), 1.0)
    covering = full[:, ::-1].cumsum(axis=1)[:, ::-1][:, 1:]
    v += covering[:, :m] * grid.step
    np.add.at(v, (states[nonzero], k[nonzero]), lengths[nonzero] - knots[k[nonzero]])
    done = dest >= 0
    np.add.at(d, (states[done], dest[done], k[done]), 1)
    return d, v


@dataclass(frozen=True)
class StepRateEstimate(RateFunction):
    """Piecewise-constant rates on the cells of an :class:`EstimationGrid`.

    ``values[i, j, k]`` is the rate on ``(v_k, v_{k+1}]`` (and at ``y = 0`` for
    ``k = 0``); zero outside ``[0, horizon]``.  ``counts``/``occupancies`` are
    present for estimates and ``None`` for projections of a known rate.
    """

    grid: EstimationGrid
    values: np.ndarray
    counts: Optional[np.ndarray] = None
    occupancies: Optional[np.ndarray] = None

    tag = "Step"

    @property
    def num_states(self) -> int:
        return self.values.shape[0]

    def matrix(self, y):
        y = np.asarray(y, dtype=float)
        k = self.grid.cell_of(y)
        inside = (k >= 0) & (k < self.grid.num_cells)
        vals = np.moveaxis(self.values, -1, 0)[np.clip(k, 0, self.grid.num_cells - 1)]
        return np.where(inside[..., None, None], vals, 0.0)

    def cumulative(self, i, y):
        y = np.clip(np.asarray(y, dtype=float), 0.0, self.grid.horizon)
        tot = self.values[i].sum(axis=0)
        cum = np.concatenate([[0.0], np.cumsum(tot) * self.grid.step])
        k = np.clip(np.floor(y / self.grid.step).astype(np.int64), 0, self.grid.num_cells - 1)
        return cum[k] + tot[k] * (y - self.grid.knots[k])


def estimate_rate(history: CensoredHistory, grid: EstimationGrid,
                  num_states: Optional[int] = None) -> StepRateEstimate:
    """``lambda_hat_ijk = d_ijk / v_ik`` where ``v_ik > 0``, else 0."""
    d, v = count_statistics(history, grid, num_states)
    occ = v[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(occ > 0, d / np.where(occ > 0, occ, 1.0), 0.0)
    n = lam.shape[0]
    lam[np.arange(n), np.arange(n)] = 0.0
    return StepRateEstimate(grid, lam, d, v)


def project_true_rate(rate: RateFunction, grid: EstimationGrid) -> StepRateEstimate:
    """Step function with the true rate sampled at each cell's left knot."""
    vals = rate.matrix(grid.knots[:-1])
    return StepRateEstimate(grid, np.moveaxis(vals, 0, -1).copy())


def _step_grids(*funcs):
    return [f.grid for f in funcs if isinstance(f, StepRateEstimate)] + [
        f.grid for f in funcs if getattr(f, "tag", None) == "Spline"
    ]


def norm_sample_points(interval, samples: int, *funcs, per_cell: int = 20) -> np.ndarray:
    """Uniform sample plus ``per_cell`` interior points and both ends of every grid cell."""
    a, b = float(interval[0]), float(interval[1])
    pts = [np.linspace(a, b, max(int(samples), 2))]
    for grid in _step_grids(*funcs):
        kn = grid.knots
        k0 = max(int(np.floor(a / grid.step)) - 1, 0)
        k1 = min(int(np.ceil(b / grid.step)) + 1, grid.num_cells)
        for k in range(k0, k1):
            pts.append(np.linspace(kn[k], kn[k + 1], per_cell + 2))
    y = np.unique(np.concatenate(pts))
    return y[(y >= a) & (y <= b)]


def pairwise_abs_difference(a: RateFunction, b: RateFunction, y) -> np.ndarray:
    """``|a_ij(y) - b_ij(y)|`` with shape ``y.shape + (n, n)``; diagonal zero."""
    diff = np.abs(a.matrix(y) - b.matrix(y))
    n = diff.shape[-1]
    diff[..., np.arange(n), np.arange(n)] = 0.0
    return diff


def error_norms(a: RateFunction, b: RateFunction, interval=(0.0, 4.0), samples: int = 2001,
                per_pair: bool = False):
    """Sup and L2 norm of ``max_{i != j} |a_ij - b_ij|`` on ``interval``.

    With ``per_pair=True`` also returns ``(sup, l2)`` matrices for every pair.
    """
    if samples < 2:
        raise ValueError("need at least two sample points")
    y = norm_sample_points(interval, samples, a, b)
    diff = pairwise_abs_difference(a, b, y)
    worst = diff.max(axis=(-1, -2))
    sup = float(worst.max())
    l2 = float(np.sqrt(np.trapezoid(worst ** 2, y)))
    if not per_pair:
        return sup, l2
    return sup, l2, diff.max(axis=0), np.sqrt(np.trapezoid(diff ** 2, y, axis=0))


# ---------------------------------------------------------------------------
# CSV


def write_estimate(estimate: StepRateEstimate, path) -> None:
    g = estimate.grid
    n = estimate.num_states
    kn = g.knots
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# tau={g.horizon:.17g}\n# alpha={g.alpha:.17g}\n")
        w = csv.writer(fh)
        w.writerow(["i", "j", "k", "v_k", "d", "v", "lambda_hat"])
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                for k in range(g.num_cells):
                    d = "" if estimate.counts is None else int(estimate.counts[i, j, k])
                    v = "" if estimate.occupancies is None else f"{estimate.occupancies[i, k]:.9g}"
                    w.writerow([i + 1, j + 1, k, f"{kn[k]:.9g}", d, v, f"{estimate.values[i, j, k]:.9g}"])


def read_estimate(path) -> StepRateEstimate:
    """Rebuild a step estimate from its CSV export (values only)."""
    meta = {}
    body = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = float(val)
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows or rows[0] != ["i", "j", "k", "v_k", "d", "v", "lambda_hat"]:
        raise ValueError("estimate file header must be 'i,j,k,v_k,d,v,lambda_hat'")
    if "tau" not in meta or "alpha" not in meta:
        raise ValueError("estimate file lacks '# tau=' / '# alpha=' lines")
    grid = build_grid(meta["tau"], meta["alpha"])
    try:
        recs = [(int(r[0]) - 1, int(r[1]) - 1, int(r[2]), float(r[6])) for r in rows[1:]]
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed estimate row: {exc}") from exc
    n = max(max(r[0], r[1]) for r in recs) + 1 if recs else 1
    vals = np.zeros((n, n, grid.num_cells))
    for i, j, k, lam in recs:
        if not 0 <= k < grid.num_cells:
            raise ValueError(f"cell index {k} outside the grid")
        vals[i, j, k] = lam
    return StepRateEstimate(grid, vals)


def write_error_norms(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "sup_error", "l2_error"])
        for tau, sup, l2 in rows:
            w.writerow([f"{tau:.9g}", f"{sup:.9g}", f"{l2:.9g}"])
