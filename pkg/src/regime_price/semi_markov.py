"""Semi-Markov regime model, transition-rate functions and path simulation.

States are indexed ``0 .. num_states - 1`` throughout the Python API.  File
formats (history CSV, estimate CSV) use 1-based state labels.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

HAZARD_EPS = 1e-14


def make_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, index)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def is_irreducible(adjacency: np.ndarray) -> bool:
    """Reachability closure of a directed graph given by a boolean matrix."""
    adj = np.asarray(adjacency, dtype=bool)
    n = adj.shape[0]
    if n <= 1:
        return True
    reach = adj | np.eye(n, dtype=bool)
    # repeated squaring of the reachability relation
    for _ in range(int(math.ceil(math.log2(n))) + 1):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    return bool(reach.all())


# ---------------------------------------------------------------------------
# holding-time laws


class HoldingLaw:
    """Holding-time distribution ``F(.|i)`` of one state."""

    family = "abstract"

    def pdf(self, y):
        raise NotImplementedError

    def sf(self, y):
        raise NotImplementedError

    def cdf(self, y):
        return 1.0 - self.sf(y)

    def cumulative_hazard(self, y):
        return -self.logsf(y)

    def logsf(self, y):
        return np.log(self.sf(y))

    def hazard(self, y):
        y = np.asarray(y, dtype=float)
        sf = self.sf(y)
        if np.any(sf <= HAZARD_EPS):
            raise ValueError("hazard blow-up: F(y|i) >= 1 - 1e-14 on the queried range")
        return self.pdf(y) / sf

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def sample_residual(self, age, exp_draw):
        """Sojourn ``w`` with ``Lambda(age + w) - Lambda(age) = exp_draw``."""
        target = self.sf(age) * np.exp(-np.asarray(exp_draw, dtype=float))
        return self.isf(target) - age

    def isf(self, q):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class GammaLaw(HoldingLaw):
    """Gamma holding law; integer ``shape`` (Erlang) uses a closed-form survival
    function evaluated in log space, so the hazard stays finite at any age."""

    shape: float
    rate: float = 1.0
    family = "gamma"

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("gamma law needs shape > 0 and rate > 0")

    @property
    def _dist(self):
        return stats.gamma(self.shape, scale=1.0 / self.rate)

    @property
    def _erlang(self) -> bool:
        return float(self.shape).is_integer()

    def _log_partial(self, y):
        # log sum_{n<k} (ry)^n / n!
        x = self.rate * np.maximum(np.asarray(y, dtype=float), 0.0)
        n = np.arange(int(self.shape))
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = n * np.log(x)[..., None] - special.gammaln(n + 1)
        terms[..., 0] = 0.0
        return special.logsumexp(terms, axis=-1)

    def pdf(self, y):
        return self._dist.pdf(y)

    def sf(self, y):
        return self._dist.sf(y)

    def logsf(self, y):
        if not self._erlang:
            return self._dist.logsf(y)
        x = self.rate * np.maximum(np.asarray(y, dtype=float), 0.0)
        return -x + self._log_partial(y)

    def hazard(self, y):
        if not self._erlang:
            return super().hazard(y)
        y = np.asarray(y, dtype=float)
        k = int(self.shape)
        x = self.rate * np.maximum(y, 0.0)
        with np.errstate(divide="ignore"):
            log_h = np.log(self.rate) + (k - 1) * np.log(x) - special.gammaln(k) - self._log_partial(y)
        h = np.exp(log_h)
        return np.where(y < 0, 0.0, h) if k > 1 else np.full(y.shape, self.rate)

    def isf(self, q):
        return self._dist.isf(q)

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)

    def to_dict(self):
        return {"family": "gamma", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class ExponentialLaw(HoldingLaw):
    rate: float
    family = "exponential"

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("exponential law needs rate > 0")

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0, self.rate * np.exp(-self.rate * y), 0.0)

    def sf(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(-self.rate * np.maximum(y, 0.0))

    def logsf(self, y):
        return -self.rate * np.maximum(np.asarray(y, dtype=float), 0.0)

    def hazard(self, y):
        return np.full(np.shape(y), self.rate, dtype=float)

    def isf(self, q):
        return -np.log(q) / self.rate

    def sample_residual(self, age, exp_draw):
        return np.asarray(exp_draw, dtype=float) / self.rate + 0.0 * np.asarray(age)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size=size)

    def to_dict(self):
        return {"family": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class WeibullLaw(HoldingLaw):
    shape: float
    scale: float = 1.0
    family = "weibull"

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("weibull law needs shape > 0 and scale > 0")

    @property
    def _dist(self):
        return stats.weibull_min(self.shape, scale=self.scale)

    def pdf(self, y):
        return self._dist.pdf(y)

    def sf(self, y):
        return self._dist.sf(y)

    def logsf(self, y):
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        return -((y / self.scale) ** self.shape)

    def isf(self, q):
        return self._dist.isf(q)

    def sample(self, rng, size=None):
        return self.scale * rng.weibull(self.shape, size=size)

    def to_dict(self):
        return {"family": "weibull", "shape": self.shape, "scale": self.scale}


_LAWS = {"gamma": GammaLaw, "exponential": ExponentialLaw, "weibull": WeibullLaw}


def law_from_dict(doc: dict) -> HoldingLaw:
    doc = dict(doc)
    family = doc.pop("family", None)
    if family not in _LAWS:
        raise ValueError(f"unknown holding-law family {family!r}; expected one of {sorted(_LAWS)}")
    return _LAWS[family](**doc)


# ---------------------------------------------------------------------------
# rate functions


class RateFunction:
    """Age-dependent transition rates ``lambda_ij(y)`` with cumulative exit hazard.

    Subclasses implement :meth:`matrix` (rates for all pairs, diagonal zero) and
    :meth:`cumulative` (``Lambda_i``).  ``tag`` is one of ``"ClosedForm"``,
    ``"Step"`` or ``"Spline"``.
    """

    tag = "ClosedForm"
    num_states: int

    def matrix(self, y) -> np.ndarray:
        """Rates at ages ``y``; shape ``y.shape + (num_states, num_states)``."""
        raise NotImplementedError

    def cumulative(self, i: int, y) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, i: int, j: int, y):
        if i == j:
            raise ValueError("lambda_ii is undefined")
        return self.matrix(y)[..., i, j]

    def exit_rate(self, i: int, y):
        return self.matrix(y)[..., i, :].sum(axis=-1)

    def jump_probabilities(self, i: int, y) -> np.ndarray:
        """Destination law given a jump out of ``i`` at age ``y``."""
        lam = self.matrix(y)[..., i, :]
        tot = lam.sum(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(tot > 0, lam / np.where(tot > 0, tot, 1.0), 0.0)
        return p

    def sample_residual(self, i: int, age, exp_draw, horizon):
        """Residual sojourn ``w`` solving ``Lambda_i(age+w) - Lambda_i(age) = E``.

        Returns ``inf`` where no jump happens within ``horizon``.  Bisection on
        the exact cumulative hazard.
        """
        age = np.asarray(age, dtype=float)
        e = np.asarray(exp_draw, dtype=float)
        horizon = np.broadcast_to(np.asarray(horizon, dtype=float), e.shape)
        age = np.broadcast_to(age, e.shape)
        base = self.cumulative(i, age)
        target = base + e
        jumps = self.cumulative(i, age + horizon) >= target
        lo = np.zeros(e.shape)
        hi = np.array(horizon, dtype=float)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = self.cumulative(i, age + mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return np.where(jumps, hi, np.inf)

    def sup_exit_rate(self, upper: float, samples: int = 2001) -> float:
        ys = np.linspace(0.0, upper, samples)
        lam = self.matrix(ys).sum(axis=-1)
        return float(lam.max()) if lam.size else 0.0


class ModelRate(RateFunction):
    """Closed-form rate ``p_ij f(y|i) / (1 - F(y|i))`` of a semi-Markov model."""

    tag = "ClosedForm"

    def __init__(self, model: "SemiMarkovModel"):
        self.model = model
        self.num_states = model.num_states

    def matrix(self, y):
        y = np.asarray(y, dtype=float)
        p = self.model.transition_matrix
        out = np.zeros(y.shape + (self.num_states, self.num_states))
        if self.num_states == 1:
            return out
        for i, law in enumerate(self.model.holding_laws):
            out[..., i, :] = law.hazard(y)[..., None] * p[i]
        return out

    def exit_rate(self, i, y):
        if self.num_states == 1:
            return np.zeros(np.shape(y))
        return self.model.holding_laws[i].hazard(np.asarray(y, dtype=float))

    def cumulative(self, i, y):
        if self.num_states == 1:
            return np.zeros(np.shape(y))
        return self.model.holding_laws[i].cumulative_hazard(np.asarray(y, dtype=float))

    def jump_probabilities(self, i, y):
        return np.broadcast_to(self.model.transition_matrix[i], np.shape(y) + (self.num_states,))

    def sample_residual(self, i, age, exp_draw, horizon):
        if self.num_states == 1:
            return np.full(np.shape(exp_draw), np.inf)
        w = self.model.holding_laws[i].sample_residual(age, exp_draw)
        return np.where(w <= horizon, w, np.inf)


class ConstantRate(RateFunction):
    """Age-independent (Markov) rates given by an off-diagonal matrix."""

    tag = "ClosedForm"

    def __init__(self, rates):
        q = np.array(rates, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("rate matrix must be square")
        np.fill_diagonal(q, 0.0)
        if np.any(q < 0):
            raise ValueError("rates must be nonnegative")
        self.rates = q
        self.num_states = q.shape[0]

    def matrix(self, y):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(self.rates, y.shape + self.rates.shape).copy()

    def cumulative(self, i, y):
        return self.rates[i].sum() * np.maximum(np.asarray(y, dtype=float), 0.0)

    def sample_residual(self, i, age, exp_draw, horizon):
        tot = self.rates[i].sum()
        e = np.asarray(exp_draw, dtype=float)
        if tot == 0:
            return np.full(e.shape, np.inf)
        w = e / tot
        return np.where(w <= horizon, w, np.inf)


# ---------------------------------------------------------------------------
# model and data containers


@dataclass(frozen=True)
class SemiMarkovModel:
    """Semi-Markov regime: embedded chain ``p_ij`` plus holding laws ``F(.|i)``.

    A single-state model (``transition_matrix == [[0]]``) is accepted as the
    degenerate no-switching case.
    """

    transition_matrix: np.ndarray
    holding_laws: tuple
    initial_distribution: np.ndarray

    def __post_init__(self):
        p = np.array(self.transition_matrix, dtype=float)
        n = p.shape[0]
        if p.ndim != 2 or p.shape != (n, n) or n == 0:
            raise ValueError("transition_matrix must be a non-empty square matrix")
        if np.any(np.diag(p) != 0):
            raise ValueError("transition_matrix must have a zero diagonal")
        if np.any(p < 0):
            raise ValueError("transition_matrix entries must be nonnegative")
        if n > 1:
            if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError("transition_matrix rows must sum to 1")
            if not is_irreducible(p > 0):
                raise ValueError("transition_matrix must be irreducible")
        laws = self.holding_laws
        if isinstance(laws, HoldingLaw):
            laws = (laws,) * n
        laws = tuple(laws)
        if len(laws) != n:
            raise ValueError("need one holding law per state")
        p0 = np.array(self.initial_distribution, dtype=float)
        if p0.shape != (n,) or np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
            raise ValueError("initial_distribution must be a probability vector")
        p.flags.writeable = False
        p0.flags.writeable = False
        object.__setattr__(self, "transition_matrix", p)
        object.__setattr__(self, "holding_laws", laws)
        object.__setattr__(self, "initial_distribution", p0)

    @property
    def num_states(self) -> int:
        return self.transition_matrix.shape[0]

    def kernel(self, i: int, j: int, y):
        """Semi-Markov kernel ``Q_ij(y) = p_ij F(y|i)``."""
        return self.transition_matrix[i, j] * self.holding_laws[i].cdf(y)

    def to_dict(self) -> dict:
        laws = [law.to_dict() for law in self.holding_laws]
        return {
            "num_states": self.num_states,
            "transition_matrix": self.transition_matrix.tolist(),
            "holding_law": laws[0] if all(l == laws[0] for l in laws) else laws,
            "initial_distribution": self.initial_distribution.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SemiMarkovModel":
        n = int(doc["num_states"])
        law = doc["holding_law"]
        laws = tuple(law_from_dict(l) for l in law) if isinstance(law, list) else (law_from_dict(law),) * n
        p0 = doc.get("initial_distribution")
        if p0 is None:
            p0 = np.full(n, 1.0 / n)
        p = np.array(doc["transition_matrix"], dtype=float)
        if p.shape != (n, n):
            raise ValueError("transition_matrix shape does not match num_states")
        return cls(p, laws, p0)


def hazard_from_model(model: SemiMarkovModel) -> ModelRate:
    return ModelRate(model)


def three_regime_model() -> SemiMarkovModel:
    """Three-state model with Gamma(2, 1) holding times, rates ``p_ij y/(1+y)``."""
    p = np.array([[0.0, 0.1, 0.9], [0.4, 0.0, 0.6], [0.7, 0.3, 0.0]])
    return SemiMarkovModel(p, (GammaLaw(2.0, 1.0),) * 3, np.full(3, 1.0 / 3.0))


@dataclass(frozen=True)
class CensoredHistory:
    """One regime trajectory observed on ``[0, horizon]``."""

    states: np.ndarray
    holding_times: np.ndarray
    backward_recurrence: float
    horizon: float

    def __post_init__(self):
        x = np.asarray(self.states, dtype=np.int64)
        y = np.asarray(self.holding_times, dtype=float)
        if len(x) != len(y) + 1:
            raise ValueError("need exactly one more state than holding times")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if np.any(y <= 0):
            raise ValueError("holding times must be positive")
        if np.any(x[1:] == x[:-1]):
            raise ValueError("consecutive states must differ")
        if self.backward_recurrence < 0:
            raise ValueError("backward recurrence time must be nonnegative")
        if abs(y.sum() + self.backward_recurrence - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ValueError("holding times plus backward recurrence must equal the horizon")
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "holding_times", y)
        object.__setattr__(self, "backward_recurrence", float(self.backward_recurrence))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def num_transitions(self) -> int:
        return len(self.holding_times)

    @property
    def jump_times(self) -> np.ndarray:
        return np.cumsum(self.holding_times)

    def truncate(self, tau: float) -> "CensoredHistory":
        """The same trajectory censored at an earlier ``tau``."""
        if tau > self.horizon or tau <= 0:
            raise ValueError("truncation horizon must lie in (0, horizon]")
        t = self.jump_times
        n = int(np.searchsorted(t, tau, side="left"))
        last = t[n - 1] if n else 0.0
        return CensoredHistory(self.states[: n + 1], self.holding_times[:n], tau - last, tau)


@dataclass(frozen=True)
class MarketParams:
    rates: np.ndarray
    volatilities: np.ndarray
    strike: float
    maturity: float
    spot: float = 1.0
    drifts: Optional[np.ndarray] = None

    def __post_init__(self):
        r = np.atleast_1d(np.array(self.rates, dtype=float))
        sig = np.atleast_1d(np.array(self.volatilities, dtype=float))
        mu = r.copy() if self.drifts is None else np.atleast_1d(np.array(self.drifts, dtype=float))
        if not (r.shape == sig.shape == mu.shape):
            raise ValueError("rates, volatilities and drifts need one entry per state")
        if np.any(sig <= 0):
            raise ValueError("volatilities must be positive")
        if np.any(r < 0) or np.any(mu < 0):
            raise ValueError("rates and drifts must be nonnegative")
        if self.strike < 0 or self.maturity <= 0 or self.spot <= 0:
            raise ValueError("need strike >= 0, maturity > 0 and spot > 0")
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "volatilities", sig)
        object.__setattr__(self, "drifts", mu)

    @property
    def num_states(self) -> int:
        return len(self.rates)

    def to_dict(self) -> dict:
        return {
            "rates": self.rates.tolist(),
            "volatilities": self.volatilities.tolist(),
            "drifts": self.drifts.tolist(),
            "strike": self.strike,
            "maturity": self.maturity,
            "spot": self.spot,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MarketParams":
        return cls(
            rates=doc["rates"],
            volatilities=doc["volatilities"],
            strike=float(doc["strike"]),
            maturity=float(doc["maturity"]),
            spot=float(doc.get("spot", 1.0)),
            drifts=doc.get("drifts"),
        )


def three_regime_market() -> MarketParams:
    return MarketParams(rates=[0.3, 0.6, 0.7], volatilities=[0.2, 0.2, 0.2], strike=1.0, maturity=1.0)


# ---------------------------------------------------------------------------
# simulation


def _regime_path(rate: RateFunction, state: int, age: float, horizon: float,
                 rng: np.random.Generator, jump_law=None):
    """Jump times (relative to start) and visited states on ``[0, horizon]``."""
    times = [0.0]
    states = [int(state)]
    t, a = 0.0, float(age)
    while True:
        w = float(rate.sample_residual(states[-1], a, rng.exponential(), horizon - t))
        if not np.isfinite(w) or t + w > horizon:
            break
        t += w
        p = rate.jump_probabilities(states[-1], a + w)
        states.append(int(rng.choice(rate.num_states, p=p / p.sum())))
        times.append(t)
        a = 0.0
    return np.array(times), np.array(states, dtype=np.int64)


def simulate_history(model: SemiMarkovModel, horizon: float, seed: int) -> CensoredHistory:
    """Observe the regime on ``[0, horizon]`` starting fresh from ``initial_distribution``."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = make_rng(seed)
    n = model.num_states
    x = [int(rng.choice(n, p=model.initial_distribution))]
    ys = []
    t = 0.0
    if n > 1:
        p = model.transition_matrix
        while True:
            w = float(model.holding_laws[x[-1]].sample(rng))
            if t + w >= horizon:
                break
            t += w
            ys.append(w)
            x.append(int(rng.choice(n, p=p[x[-1]])))
    return CensoredHistory(np.array(x), np.array(ys), horizon - t, horizon)


@dataclass(frozen=True)
class AssetPath:
    """Regime-modulated asset path.

    ``segment_starts``/``segment_states`` describe the regime exactly; the
    sampled columns ``times, spot, state, age`` include every jump time.
    """

    times: np.ndarray
    spot: np.ndarray
    state: np.ndarray
    age: np.ndarray
    segment_starts: np.ndarray
    segment_states: np.ndarray
    horizon: float
    rates: np.ndarray = field(repr=False)

    def occupation(self, t0: float, t1: float) -> np.ndarray:
        """Time spent in each regime during ``[t0, t1]``."""
        ends = np.append(self.segment_starts[1:], self.horizon)
        lo = np.clip(self.segment_starts, t0, t1)
        hi = np.clip(ends, t0, t1)
        occ = np.zeros(len(self.rates))
        np.add.at(occ, self.segment_states, hi - lo)
        return occ


def simulate_asset_path(model, params: MarketParams, measure: str = "RiskNeutral",
                        step: float = 0.01, seed: int = 0, *, state: Optional[int] = None,
                        age: float = 0.0, spot: Optional[float] = None,
                        horizon: Optional[float] = None) -> AssetPath:
    """Exact lognormal path on a ``step`` grid augmented with the jump times.

    ``model`` is a :class:`SemiMarkovModel` or any :class:`RateFunction`.  The
    first sojourn is drawn conditionally on the starting ``age``.  ``measure``
    picks the drift: ``"Physical"`` uses ``mu``, ``"RiskNeutral"`` uses ``r``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if measure not in ("Physical", "RiskNeutral"):
        raise ValueError("measure must be 'Physical' or 'RiskNeutral'")
    rng = make_rng(seed)
    horizon = params.maturity if horizon is None else float(horizon)
    if isinstance(model, SemiMarkovModel):
        rate = hazard_from_model(model)
        if state is None:
            state = int(rng.choice(model.num_states, p=model.initial_distribution))
    else:
        rate = model
        if state is None:
            raise ValueError("a starting state is required for a bare rate function")
    starts, states = _regime_path(rate, state, age, horizon, rng)
    grid = np.arange(0.0, horizon, step)
    times = np.union1d(np.append(grid, horizon), starts)
    seg = np.searchsorted(starts, times[:-1], side="right") - 1
    seg_state = states[seg]
    dt = np.diff(times)
    drift = params.drifts if measure == "Physical" else params.rates
    sig = params.volatilities[seg_state]
    incr = (drift[seg_state] - 0.5 * sig ** 2) * dt + sig * np.sqrt(dt) * rng.standard_normal(len(dt))
    s0 = params.spot if spot is None else float(spot)
    s = s0 * np.exp(np.concatenate([[0.0], np.cumsum(incr)]))
    seg_all = np.searchsorted(starts, times, side="right") - 1
    ages = times - starts[seg_all] + np.where(seg_all == 0, age, 0.0)
    return AssetPath(times, s, states[seg_all], ages, starts, states, horizon, params.rates)


def discount_factor(path: AssetPath, t0: float, t1: float) -> float:
    """``exp(-int_{t0}^{t1} r(X_u) du)`` from exact regime occupation times."""
    if not (0.0 <= t0 <= t1 <= path.horizon + 1e-12):
        raise ValueError("interval lies outside the path span")
    return float(np.exp(-path.occupation(t0, t1) @ path.rates))


# ---------------------------------------------------------------------------
# file formats


def write_history(history: CensoredHistory, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# tau={history.horizon:.17g}\n")
        w = csv.writer(fh)
        w.writerow(["index", "state", "holding_time"])
        for l, (x, y) in enumerate(zip(history.states[:-1], history.holding_times)):
            w.writerow([l, int(x) + 1, f"{y:.17g}"])
        w.writerow(["censored", int(history.states[-1]) + 1, f"{history.backward_recurrence:.17g}"])


def read_history(path) -> CensoredHistory:
    """Parse the history CSV; raises ``ValueError`` on malformed input."""
    lines = Path(path).read_text().splitlines()
    tau = None
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "tau":
                tau = float(val)
        elif line.strip():
            body.append(line)
    if tau is None:
        raise ValueError("history file lacks a '# tau=<value>' line")
    rows = list(csv.reader(body))
    if not rows or rows[0] != ["index", "state", "holding_time"]:
        raise ValueError("history file header must be 'index,state,holding_time'")
    rows = rows[1:]
    if not rows or rows[-1][0] != "censored":
        raise ValueError("history file lacks the 'censored' footer row")
    try:
        states = [int(r[1]) - 1 for r in rows]
        times = [float(r[2]) for r in rows[:-1]]
        u = float(rows[-1][2])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed history row: {exc}") from exc
    return CensoredHistory(np.array(states), np.array(times), u, tau)


def load_model(path) -> SemiMarkovModel:
    return SemiMarkovModel.from_dict(json.loads(Path(path).read_text()))
