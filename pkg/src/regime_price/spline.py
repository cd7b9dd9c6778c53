"""Quadratic B-spline smoothing of step rate estimates."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimation import EstimationGrid, StepRateEstimate, pairwise_abs_difference, norm_sample_points
from .semi_markov import RateFunction, is_irreducible

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def bspline_basis(k: int, y, step: float) -> np.ndarray:
    """Quadratic B-spline ``B_k^2(y)`` on the knots ``v_k = k * step``.

    Written with the general three-piece formula (divided knot spacings), so it
    doubles as an independent check of the uniform evaluation in
    :class:`SmoothedRate`.
    """
    y = np.asarray(y, dtype=float)
    v0, v1, v2, v3 = (k * step, (k + 1) * step, (k + 2) * step, (k + 3) * step)
    first = (y - v0) ** 2 / ((v2 - v0) * (v1 - v0))
    middle = (y - v0) * (v2 - y) / ((v2 - v1) * (v2 - v0)) + (v3 - y) * (y - v1) / ((v2 - v1) * (v3 - v1))
    last = (v3 - y) ** 2 / ((v3 - v2) * (v3 - v1))
    return np.select(
        [(y >= v0) & (y < v1), (y >= v1) & (y < v2), (y >= v2) & (y < v3)],
        [first, middle, last],
        0.0,
    )


def extension_cells(estimate: StepRateEstimate, pricing_horizon: float) -> np.ndarray:
    """Per pair, the cell holding ``T1 = argmax_{y in [T, tau]} lambda_hat``.

    Ties go to the smallest ``y``.
    """
    g = estimate.grid
    k_lo = int(g.cell_of(pricing_horizon))
    window = estimate.values[:, :, k_lo:]
    return k_lo + np.argmax(window, axis=-1)


@dataclass(frozen=True)
class SmoothedRate(RateFunction):
    """``sum_k c_k B_k^2(y)`` with ``c_k = lambda_hat(v_{k+2})`` per pair.

    ``coefficients[i, j, m]`` stores ``c_{m + offset}``; indices beyond either
    end repeat the boundary value, which is exactly the constant extension of
    the step estimate left of 0 and right of ``T1``.
    """

    grid: EstimationGrid
    coefficients: np.ndarray
    extension_cutoff: np.ndarray
    pricing_horizon: float
    offset: int = -2

    tag = "Spline"

    @property
    def num_states(self) -> int:
        return self.coefficients.shape[0]

    @property
    def tail_rates(self) -> np.ndarray:
        return self.coefficients[:, :, -1]

    def _coef(self, k):
        idx = np.clip(np.asarray(k) - self.offset, 0, self.coefficients.shape[-1] - 1)
        return np.moveaxis(self.coefficients, -1, 0)[idx]

    def _locate(self, y):
        h = self.grid.step
        m = np.floor(y / h)
        t = y / h - m
        return m.astype(np.int64), t

    def matrix(self, y):
        y = np.asarray(y, dtype=float)
        m, t = self._locate(y)
        t = t[..., None, None]
        return (self._coef(m - 2) * (1 - t) ** 2 / 2
                + self._coef(m - 1) * (-2 * t ** 2 + 2 * t + 1) / 2
                + self._coef(m) * t ** 2 / 2)

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        m, t = self._locate(y)
        t = t[..., None, None]
        return (-self._coef(m - 2) * (1 - t) + self._coef(m - 1) * (1 - 2 * t) + self._coef(m) * t) / self.grid.step

    def _cell_integrals(self, i):
        """Exact ``int lambda_i`` over every cell ``[v_m, v_{m+1}]`` with ``m >= 0``."""
        tot = self.coefficients[i].sum(axis=0)
        # cell m uses c_{m-2}, c_{m-1}, c_m
        ms = np.arange(0, tot.size + 2)
        c = lambda k: tot[np.clip(k - self.offset, 0, tot.size - 1)]
        return self.grid.step * (c(ms - 2) / 6 + 2 * c(ms - 1) / 3 + c(ms) / 6)

    def cumulative(self, i, y):
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        tot = self.coefficients[i].sum(axis=0)
        cells = self._cell_integrals(i)
        cum = np.concatenate([[0.0], np.cumsum(cells)])
        last = cells.size
        c = lambda k: tot[np.clip(k - self.offset, 0, tot.size - 1)]
        m, t = self._locate(y)
        inside = m < last
        mm = np.minimum(m, last - 1)
        tt = np.where(inside, t, 0.0)
        part = self.grid.step * (c(mm - 2) * (1 - (1 - tt) ** 3) / 6
                                 + c(mm - 1) * (-2 * tt ** 3 / 3 + tt ** 2 + tt) / 2
                                 + c(mm) * tt ** 3 / 6)
        inner = cum[mm] + part
        beyond = cum[last] + tot[-1] * (y - last * self.grid.step)
        return np.where(inside, inner, beyond)

    @property
    def support_end(self) -> float:
        """Age beyond which every pair's rate is constant."""
        return (self.coefficients.shape[-1] + self.offset + 2) * self.grid.step


def smooth(estimate: StepRateEstimate, pricing_horizon: float) -> SmoothedRate:
    """C^1 quadratic B-spline smoothing of a step estimate."""
    g = estimate.grid
    if pricing_horizon > g.horizon:
        raise ValueError("estimation horizon tau must be at least the pricing horizon T")
    if pricing_horizon < 0:
        raise ValueError("pricing horizon must be nonnegative")
    k1 = extension_cells(estimate, pricing_horizon)
    n = estimate.num_states
    offset = -2
    k_hi = int(k1.max()) + 3
    ks = np.arange(offset, k_hi + 1)
    coef = np.empty((n, n, ks.size))
    for i in range(n):
        for j in range(n):
            coef[i, j] = estimate.values[i, j, np.clip(ks + 1, 0, k1[i, j])]
    coef[np.arange(n), np.arange(n)] = 0.0
    cutoff = g.knots[k1 + 1]
    return SmoothedRate(g, coef, cutoff, float(pricing_horizon), offset)


def extended_step_values(smoothed: SmoothedRate, estimate: StepRateEstimate) -> np.ndarray:
    """Cell values of the step estimate after the constant right extension."""
    k1 = extension_cells(estimate, smoothed.pricing_horizon)
    ks = np.arange(estimate.grid.num_cells)
    return np.where(ks[None, None, :] <= k1[..., None], estimate.values, np.take_along_axis(
        estimate.values, k1[..., None], axis=-1))


def modulus_of_continuity(cell_values: np.ndarray, step: float, upper: float) -> np.ndarray:
    """``omega(f; step)`` on ``[0, upper]`` for a step function on ``(v_k, v_{k+1}]`` cells.

    Points a distance ``step`` apart sit in adjacent cells, so the modulus is
    the largest jump between adjacent cells ``k, k+1`` with ``v_k < upper - step``.
    Returns one value per pair.
    """
    m = cell_values.shape[-1]
    n_pairs = int(np.ceil((upper - step) / step - 1e-12))
    n_pairs = min(max(n_pairs, 0), m - 1)
    if n_pairs == 0:
        return np.zeros(cell_values.shape[:-1])
    jumps = np.abs(np.diff(cell_values[..., : n_pairs + 1], axis=-1))
    return jumps.max(axis=-1)


def sup_distance_to_step(smoothed: SmoothedRate, estimate: StepRateEstimate, interval=(0.0, None),
                         samples: int = 2001):
    """``(distance, bound)`` with distance ``max_{i!=j} sup |lambda_hat - lambda_tilde|``.

    The bound is ``2 omega(lambda_hat; step)`` taken over ``[0, T + step]``, the
    stretch of the extended step function the spline reads on ``[0, T]``.
    """
    a = float(interval[0])
    b = smoothed.pricing_horizon if interval[1] is None else float(interval[1])
    y = norm_sample_points((a, b), samples, estimate)
    distance = float(pairwise_abs_difference(smoothed, estimate, y).max())
    ext = extended_step_values(smoothed, estimate)
    h = estimate.grid.step
    omega = modulus_of_continuity(ext, h, b + h)
    n = omega.shape[0]
    omega[np.arange(n), np.arange(n)] = 0.0
    bound = 2.0 * float(omega.max())
    if distance > bound + 1e-12:
        raise AssertionError(f"spline-vs-step distance {distance} exceeds 2*omega = {bound}")
    return distance, bound


@dataclass
class TBAReport:
    c1: bool
    tail: list
    irreducible: bool
    p_hat: np.ndarray
    max_derivative_jump: float

    @property
    def row_sums(self) -> np.ndarray:
        return self.p_hat.sum(axis=1)

    @property
    def passed(self) -> bool:
        return self.c1 and all(self.tail) and self.irreducible

    def to_dict(self) -> dict:
        return {
            "c1": bool(self.c1),
            "tail": [bool(t) for t in self.tail],
            "irreducible": bool(self.irreducible),
            "p_hat": self.p_hat.tolist(),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def embedded_chain(smoothed: SmoothedRate) -> np.ndarray:
    """``p_hat_ij = int_0^inf lambda_tilde_ij exp(-Lambda_tilde_i) dy``.

    Gauss-Legendre per cell over the non-constant part, closed form for the
    constant tail.
    """
    n = smoothed.num_states
    h = smoothed.grid.step
    end = smoothed.support_end
    n_cells = int(round(end / h))
    left = np.arange(n_cells) * h
    y = (left[:, None] + h * (_GL_NODES[None, :] + 1) / 2).ravel()
    w = np.tile(_GL_WEIGHTS * h / 2, n_cells)
    lam = smoothed.matrix(y)
    p_hat = np.zeros((n, n))
    for i in range(n):
        surv = np.exp(-smoothed.cumulative(i, y))
        p_hat[i] = (lam[:, i, :] * (surv * w)[:, None]).sum(axis=0)
        tail = smoothed.tail_rates[i]
        total = tail.sum()
        if total > 0:
            p_hat[i] += tail / total * np.exp(-smoothed.cumulative(i, end))
    p_hat[np.arange(n), np.arange(n)] = 0.0
    return p_hat


def validate_tba_conditions(smoothed: SmoothedRate, rel_tol: float = 1e-4) -> TBAReport:
    """Check C^1 smoothness, divergent cumulative hazard and irreducibility of ``p_hat``."""
    h = smoothed.grid.step
    n_knots = int(round(smoothed.support_end / h)) + 1
    knots = np.arange(n_knots) * h
    eps = 1e-6 * h
    centre = smoothed.matrix(knots)
    right = (smoothed.matrix(knots + eps) - centre) / eps
    left = (centre - smoothed.matrix(knots - eps)) / eps
    jump = float(np.abs(right - left).max()) if knots.size else 0.0
    scale = float(np.abs(smoothed.coefficients).max()) if smoothed.coefficients.size else 0.0
    c1 = jump <= rel_tol * max(scale, 1e-300) or scale == 0.0
    tail = [bool(smoothed.tail_rates[i].sum() > 0) for i in range(smoothed.num_states)]
    p_hat = embedded_chain(smoothed)
    irreducible = is_irreducible(p_hat > 0)
    return TBAReport(c1, tail, irreducible, p_hat, jump)


def write_smoothed(smoothed: SmoothedRate, path, upper=None, points: int = 401) -> None:
    upper = smoothed.pricing_horizon if upper is None else upper
    y = np.linspace(0.0, upper, points)
    lam = smoothed.matrix(y)
    n = smoothed.num_states
    with Path(path).open("w") as fh:
        fh.write("i,j,y,lambda_tilde\n")
        for i in range(n):
            for j in range(n):
                if i != j:
                    for yy, val in zip(y, lam[:, i, j]):
                        fh.write(f"{i + 1},{j + 1},{yy:.9g},{val:.9g}\n")
