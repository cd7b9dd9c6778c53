"""European call prices in the semi-Markov regime-switching market.

The price ``phi(t, s, i, y)`` solves

    phi_t + phi_y + r_i s phi_s + sigma_i^2 s^2 phi_ss / 2
        + sum_{j != i} lambda_ij(y) (phi(t, s, j, 0) - phi(t, s, i, y)) = r_i phi

with ``phi(T, s, i, y) = (s - K)^+`` and ``phi(t, 0, i, y) = 0``.  The solver
marches backward along the characteristics ``t - y = const`` (time step equals
age step), so the ``phi_t + phi_y`` transport is exact and each characteristic
needs one tridiagonal solve in ``s`` per step.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numba
import numpy as np
from scipy.stats import norm

from .semi_markov import MarketParams, RateFunction, make_rng

# an old system TBB only disables that layer; numba falls back to OpenMP
warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)


@numba.njit(parallel=True, cache=True)
def _theta_step(u, nlines, dt, theta, lo, mid, up, bc, lam_old, lam_new, w_old, w_new,
                phi0_old, phi0_new):  # pragma: no cover - compiled
    nst = u.shape[0]
    ns = u.shape[2]
    for job in numba.prange(nst * nlines):
        i = job // nlines
        p = job % nlines
        rhs = np.empty(ns)
        cp = np.empty(ns)
        l_old = lam_old[i, p]
        l_new = lam_new[i, p]
        for n in range(ns):
            x = u[i, p, n]
            acc = (mid[i, n] - l_old) * x
            if n > 0:
                acc += lo[i, n] * u[i, p, n - 1]
            if n < ns - 1:
                acc += up[i, n] * u[i, p, n + 1]
            src_new = 0.0
            src_old = 0.0
            for j in range(nst):
                if j != i:
                    src_new += w_new[i, j, p] * phi0_new[j, n]
                    src_old += w_old[i, j, p] * phi0_old[j, n]
            r = x + (1.0 - theta) * dt * acc + dt * (theta * src_new + (1.0 - theta) * src_old)
            if n == ns - 1:
                r += dt * bc[i]
            rhs[n] = r
        # Thomas
        b = 1.0 - theta * dt * (mid[i, 0] - l_new)
        c = -theta * dt * up[i, 0]
        cp[0] = c / b
        rhs[0] = rhs[0] / b
        for n in range(1, ns):
            a = -theta * dt * lo[i, n]
            b = 1.0 - theta * dt * (mid[i, n] - l_new)
            c = -theta * dt * up[i, n] if n < ns - 1 else 0.0
            denom = b - a * cp[n - 1]
            cp[n] = c / denom
            rhs[n] = (rhs[n] - a * rhs[n - 1]) / denom
        u[i, p, ns - 1] = rhs[ns - 1]
        for n in range(ns - 2, -1, -1):
            u[i, p, n] = rhs[n] - cp[n] * u[i, p, n + 1]


def _default_stride(num_steps: int, target: int = 25) -> int:
    lo = max(1, math.ceil(num_steps / target))
    for k in range(lo, num_steps + 1):
        if num_steps % k == 0:
            return k
    return num_steps


@dataclass(frozen=True)
class PriceGrid:
    """Time/age lattice with ``delta_y == delta_t`` and a uniform spot mesh on ``[0, s_max]``.

    Only every ``store_stride``-th time level and age are kept in the solved
    surface; ``theta = 0.5`` is Crank-Nicolson, started with
    ``rannacher_steps`` pairs of implicit half steps.
    """

    maturity: float
    time_step: float
    s_max: float
    num_s: int
    theta: float = 0.5
    rannacher_steps: int = 2
    store_stride: Optional[int] = None

    def __post_init__(self):
        if self.maturity <= 0 or self.time_step <= 0 or self.s_max <= 0 or self.num_s < 3:
            raise ValueError("grid needs positive maturity, time step, s_max and at least 3 spot cells")
        n = self.maturity / self.time_step
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("time_step must divide the maturity")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0.5, 1]")
        stride = self.store_stride or _default_stride(int(round(n)))
        if int(round(n)) % stride:
            raise ValueError("store_stride must divide the number of time steps")
        object.__setattr__(self, "store_stride", int(stride))

    @classmethod
    def from_steps(cls, maturity: float, delta_t: float, s_max: float, delta_s: float, **kw) -> "PriceGrid":
        num_s = int(round(s_max / delta_s))
        if abs(num_s * delta_s - s_max) > 1e-9 * s_max:
            raise ValueError("delta_s must divide s_max")
        return cls(maturity, delta_t, s_max, num_s, **kw)

    @property
    def num_steps(self) -> int:
        return int(round(self.maturity / self.time_step))

    @property
    def delta_s(self) -> float:
        return self.s_max / self.num_s

    @property
    def spots(self) -> np.ndarray:
        return np.arange(self.num_s + 1) * self.delta_s

    def to_config(self) -> dict:
        return {"delta_t": self.time_step, "s_max": self.s_max, "delta_s": self.delta_s,
                "theta_scheme": self.theta}


@dataclass(frozen=True)
class PriceSurface:
    """Solved prices on the stored lattice.

    ``values[a, b, i, n]`` is ``phi(a H, s_n, i, b H)`` with ``H`` the stored
    lattice spacing; entries with ``b > a`` lie outside the domain and are NaN.
    """

    grid: PriceGrid
    values: np.ndarray
    strike: float
    rate_tag: str

    @property
    def lattice_step(self) -> float:
        return self.grid.store_stride * self.grid.time_step

    @property
    def levels(self) -> int:
        return self.values.shape[0] - 1

    def initial(self, state: Optional[int] = None) -> np.ndarray:
        """``phi(0, s, i, 0)`` on the spot mesh."""
        v = self.values[0, 0]
        return v if state is None else v[state]

    def write_csv(self, path) -> None:
        h = self.lattice_step
        spots = self.grid.spots
        with Path(path).open("w") as fh:
            fh.write("t,s,i,y,phi\n")
            for a in range(self.values.shape[0]):
                for b in range(a + 1):
                    for i in range(self.values.shape[2]):
                        for s, v in zip(spots, self.values[a, b, i]):
                            fh.write(f"{a * h:.9g},{s:.9g},{i + 1},{b * h:.9g},{v:.9g}\n")


def _operator(params: MarketParams, grid: PriceGrid):
    """Central-difference coefficients on nodes ``1..num_s`` (node 0 is the Dirichlet zero)."""
    n = np.arange(1, grid.num_s + 1, dtype=float)
    sig2 = params.volatilities[:, None] ** 2
    r = params.rates[:, None]
    lo = 0.5 * sig2 * n ** 2 - 0.5 * r * n
    up = 0.5 * sig2 * n ** 2 + 0.5 * r * n
    mid = -sig2 * n ** 2 - r
    # ghost node from phi_s(s_max) = 1: phi_{N+1} = phi_{N-1} + 2 ds
    bc = up[:, -1] * 2.0 * grid.delta_s
    lo[:, -1] += up[:, -1]
    up[:, -1] = 0.0
    return lo, mid, up, bc


def _check_dominance(lo, mid, up, dt, theta):
    diag = 1.0 - theta * dt * mid
    sub = np.abs(lo)
    sub[:, 0] = 0.0
    off = theta * dt * (sub + np.abs(up))
    if np.any(diag < off - 1e-12):
        raise ValueError("tridiagonal system is not diagonally dominant; reduce delta_t")


def solve_pde(params: MarketParams, rate: RateFunction, grid: PriceGrid) -> PriceSurface:
    """Backward characteristic march of the coupled pricing system."""
    nst = params.num_states
    if rate.num_states != nst:
        raise ValueError("rate function and market disagree on the number of states")
    if abs(grid.maturity - params.maturity) > 1e-12:
        raise ValueError("grid maturity differs from the option maturity")
    if grid.s_max < 3.0 * params.strike:
        raise ValueError("s_max < 3K: spot truncation too tight")
    N = grid.num_steps
    dt = grid.time_step
    theta = grid.theta

    ages = np.arange(N + 1) * dt
    w_tab = np.ascontiguousarray(np.moveaxis(rate.matrix(ages), 0, -1))
    w_half = np.ascontiguousarray(np.moveaxis(rate.matrix(ages + 0.5 * dt), 0, -1))
    for w in (w_tab, w_half):
        w[np.arange(nst), np.arange(nst)] = 0.0
    lam_tab = w_tab.sum(axis=1)
    lam_half = w_half.sum(axis=1)
    if dt * max(lam_tab.max(initial=0.0), lam_half.max(initial=0.0)) >= 1.0:
        raise ValueError("delta_t * sup lambda >= 1; reduce delta_t")

    lo, mid, up, bc = _operator(params, grid)
    _check_dominance(lo, mid, up, dt, theta)

    spots = grid.spots
    payoff = np.maximum(spots[1:] - params.strike, 0.0)
    u = np.empty((nst, N + 1, grid.num_s))
    u[:] = payoff

    k = grid.store_stride
    L = N // k
    values = np.full((L + 1, L + 1, nst, grid.num_s + 1), np.nan)

    def store(m):
        a = m // k
        for b in range(a + 1):
            values[a, b, :, 0] = 0.0
            values[a, b, :, 1:] = u[:, m - b * k, :]

    store(N)
    for m in range(N - 1, -1, -1):
        nl = m + 1
        q_new = m - np.arange(nl)
        phi0_old = u[:, m + 1, :].copy()
        if N - 1 - m < grid.rannacher_steps:
            half = 0.5 * dt
            _theta_step(u, nl, half, 1.0, lo, mid, up, bc,
                        lam_tab[:, q_new + 1], lam_half[:, q_new],
                        w_tab[:, :, q_new + 1], w_half[:, :, q_new], phi0_old, phi0_old)
            _theta_step(u, nl, half, 1.0, lo, mid, up, bc,
                        lam_half[:, q_new], lam_tab[:, q_new],
                        w_half[:, :, q_new], w_tab[:, :, q_new], phi0_old, phi0_old)
        else:
            # predictor for phi(t_m, ., j, 0) on the newest characteristic
            pred = u[:, m:m + 1, :].copy()
            z = np.zeros(1, dtype=np.int64)
            _theta_step(pred, 1, dt, theta, lo, mid, up, bc,
                        lam_tab[:, z + 1], lam_tab[:, z], w_tab[:, :, z + 1], w_tab[:, :, z],
                        phi0_old, phi0_old)
            phi0_new = np.ascontiguousarray(pred[:, 0, :])
            _theta_step(u, nl, dt, theta, lo, mid, up, bc,
                        lam_tab[:, q_new + 1], lam_tab[:, q_new],
                        w_tab[:, :, q_new + 1], w_tab[:, :, q_new], phi0_old, phi0_new)
        if m % k == 0:
            store(m)
    return PriceSurface(grid, values, float(params.strike), rate.tag)


def price_at(surface: PriceSurface, t: float, s: float, i: int, y: float) -> float:
    """Linear in ``s``; barycentric on the stored ``(t - y, y)`` lattice (exact at nodes)."""
    g = surface.grid
    tol = 1e-9
    if not (-tol <= t <= g.maturity + tol and -tol <= y <= t + tol and 0.0 <= s <= g.s_max):
        raise ValueError("query point lies outside the solved domain")
    h = surface.lattice_step
    L = surface.levels
    cc = min(max((t - y) / h, 0.0), L)
    yy = min(max(y / h, 0.0), L)
    if abs(cc - round(cc)) < tol:
        cc = float(round(cc))
    if abs(yy - round(yy)) < tol:
        yy = float(round(yy))
    c0 = min(int(math.floor(cc)), L - 1)
    y0 = min(int(math.floor(yy)), L - 1)
    fc, fy = cc - c0, yy - y0
    if fc + fy <= 1.0:
        corners = [((c0, y0), 1.0 - fc - fy), ((c0 + 1, y0), fc), ((c0, y0 + 1), fy)]
    else:
        corners = [((c0 + 1, y0 + 1), fc + fy - 1.0), ((c0 + 1, y0), 1.0 - fy), ((c0, y0 + 1), 1.0 - fc)]
    spots = g.spots
    out = 0.0
    for (c, b), wgt in corners:
        if wgt == 0.0:
            continue
        out += wgt * np.interp(s, spots, surface.values[c + b, b, i])
    return float(out)


def black_scholes_call(s, K, r, sigma, tau):
    """Black-Scholes call; ``(s - K)^+`` at ``tau == 0``."""
    s = np.asarray(s, dtype=float)
    if tau < 0:
        raise ValueError("time to maturity must be nonnegative")
    if tau == 0:
        return np.maximum(s - K, 0.0)
    if K == 0:
        return s.copy() if s.ndim else float(s)
    with np.errstate(divide="ignore"):
        d1 = (np.log(s / K) + (r + 0.5 * sigma ** 2) * tau) / (sigma * math.sqrt(tau))
    d2 = d1 - sigma * math.sqrt(tau)
    out = np.where(s > 0, s * norm.cdf(d1) - K * math.exp(-r * tau) * norm.cdf(d2), 0.0)
    return float(out) if out.ndim == 0 else out


def simulate_occupation(rate: RateFunction, params: MarketParams, state: int, age: float,
                        horizon: float, paths: int, rng: np.random.Generator):
    """Integrated rate and variance over ``[0, horizon]`` for ``paths`` regime paths."""
    r = params.rates
    sig2 = params.volatilities ** 2
    cur = np.full(paths, int(state))
    ages = np.full(paths, float(age))
    elapsed = np.zeros(paths)
    int_r = np.zeros(paths)
    int_v = np.zeros(paths)
    active = np.ones(paths, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        groups = [(k, idx[cur[idx] == k]) for k in range(rate.num_states)]
        for k, sub in groups:
            if sub.size == 0:
                continue
            e = rng.exponential(size=sub.size)
            w = rate.sample_residual(k, ages[sub], e, horizon - elapsed[sub])
            jumped = np.isfinite(w)
            dur = np.where(jumped, w, horizon - elapsed[sub])
            int_r[sub] += r[k] * dur
            int_v[sub] += sig2[k] * dur
            elapsed[sub] += dur
            movers = sub[jumped]
            if movers.size:
                probs = np.asarray(rate.jump_probabilities(k, ages[movers] + w[jumped]))
                draw = rng.random(movers.size)
                nxt = (np.cumsum(probs, axis=-1) < draw[:, None] * probs.sum(axis=-1, keepdims=True)).sum(axis=-1)
                cur[movers] = np.minimum(nxt, rate.num_states - 1)
                ages[movers] = 0.0
            active[sub[~jumped]] = False
    return int_r, int_v


def monte_carlo_price(params: MarketParams, rate: RateFunction, t: float, s: float, i: int,
                      y: float = 0.0, paths: int = 100_000, seed: int = 0):
    """Discounted risk-neutral payoff mean and its standard error.

    Regime paths are exact (inverse cumulative hazard); given the regime path,
    ``log S_T`` is Gaussian, so no time stepping is involved.
    """
    if paths < 100:
        raise ValueError("need at least 100 paths")
    if not 0 <= t <= params.maturity or y < 0:
        raise ValueError("need 0 <= t <= T and y >= 0")
    rng = make_rng(seed, 1)
    horizon = params.maturity - t
    int_r, int_v = simulate_occupation(rate, params, i, y, horizon, paths, rng)
    z = rng.standard_normal(paths)
    s_T = s * np.exp(int_r - 0.5 * int_v + np.sqrt(int_v) * z)
    disc = np.exp(-int_r) * np.maximum(s_T - params.strike, 0.0)
    return float(disc.mean()), float(disc.std(ddof=1) / math.sqrt(paths))


def write_solver_config(grid: PriceGrid, path) -> None:
    Path(path).write_text(json.dumps(grid.to_config(), indent=2) + "\n")
