"""Estimating ``(beta_bar, gamma, s_bar(t_i), h(t_i))`` from an observed window.

Three routes are provided:

* :func:`fit_sequential` -- ``h(t_i)`` read from the data, ``gamma`` from a
  closed-form estimator, then a 2-D Nelder-Mead search over
  ``(beta_bar, s_bar(t_i))``. This is the default pipeline.
* :func:`fit_joint4d` -- Nelder-Mead over all four estimands, seeded by the
  sequential fit.
* :func:`estimate_closed_form` -- a pointwise diagnostic estimator of
  ``beta_bar`` from finite differences of ``h`` and ``e``.

Alignment convention: the model step ``t -> t+1`` produces flows ``E(t)`` and
``L(t)``; in a reconciled series those are the observed ``e[t+1]`` and
``l[t+1]``. The objective therefore compares ``E(t)`` with ``e[t+1]`` for
``t`` in ``[t_i, t_c - 1]`` and ``H(t)`` with ``h[t]`` for ``t`` in
``[t_i, t_c]``.
"""

from __future__ import annotations

import datetime as dt
import math
import warnings
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .data import ObservedSeries
from .model import DivergenceError, SHParams, SHState, Trajectory, simulate
from .optimizer import SimplexConfig, SolveReport, nelder_mead

__all__ = [
    "Window",
    "WindowError",
    "DegenerateWindowError",
    "LossWeights",
    "FitResult",
    "DEFAULT_GUESS",
    "estimate_h0",
    "estimate_gamma_ratio_of_means",
    "estimate_gamma_least_squares",
    "estimate_gamma",
    "objective_phi",
    "fit_sequential",
    "fit_joint4d",
    "ClosedFormEstimate",
    "estimate_closed_form",
]

DEFAULT_GUESS = (1e-5, 1e4)

Method = Literal["sequential", "joint4d", "closed_form"]
GammaEstimator = Literal["ratio_of_means", "least_squares"]


class WindowError(ValueError):
    pass


class DegenerateWindowError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    """Closed train window ``[t_i, t_c]`` in day indices from the series start."""

    t_i: int
    t_c: int

    def __post_init__(self):
        if self.t_i < 0:
            raise WindowError(f"t_i must be >= 0, got {self.t_i}")
        if self.t_c - self.t_i + 1 < 3:
            raise WindowError(f"window [{self.t_i}, {self.t_c}] is shorter than 3 days")

    @property
    def length(self) -> int:
        return self.t_c - self.t_i + 1

    @property
    def n_steps(self) -> int:
        return self.t_c - self.t_i

    def validate(self, series: ObservedSeries, allow_series_end: bool = True) -> "Window":
        # fitting alone may use the whole series; forecasting needs t_c < end
        last = len(series) - 1
        if self.t_c > last or (not allow_series_end and self.t_c >= last):
            raise WindowError(f"window [{self.t_i}, {self.t_c}] exceeds series of length {len(series)}")
        return self


@dataclass(frozen=True)
class LossWeights:
    c_h: float = 1.0
    c_e: float = 1.0
    c_l: float = 1.0

    def __post_init__(self):
        ws = (self.c_h, self.c_e, self.c_l)
        if any(not math.isfinite(w) or w < 0 for w in ws):
            raise ValueError(f"weights must be finite and non-negative, got {ws}")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one weight must be positive")

    def scaled(self, k: float) -> "LossWeights":
        return LossWeights(k * self.c_h, k * self.c_e, k * self.c_l)


@dataclass(frozen=True)
class FitResult:
    params: SHParams
    initial: SHState
    phi_star: float
    method: str
    gamma_estimator: str
    solver: Optional[SolveReport]
    fitted: Trajectory
    window: Window
    weights: LossWeights
    start_date: Optional[dt.date] = None

    @property
    def converged(self) -> bool:
        return self.solver.converged if self.solver is not None else True

    @property
    def estimands(self) -> tuple[float, float, float, float]:
        return (self.params.beta_bar, self.initial.s_bar, self.params.gamma, self.initial.h)

    def to_dict(self) -> dict:
        window = {"t_i": self.window.t_i, "t_c": self.window.t_c}
        if self.start_date is not None:
            window["start_date"] = (self.start_date + dt.timedelta(days=self.window.t_i)).isoformat()
            window["end_date"] = (self.start_date + dt.timedelta(days=self.window.t_c)).isoformat()
        return {
            "method": self.method,
            "window": window,
            "params": {"beta_bar": self.params.beta_bar, "gamma": self.params.gamma},
            "initial": {"s_bar": self.initial.s_bar, "h": self.initial.h},
            "phi_star": self.phi_star,
            "solver": self.solver.to_dict() if self.solver is not None else None,
            "gamma_estimator": self.gamma_estimator,
            "weights": {"c_h": self.weights.c_h, "c_e": self.weights.c_e, "c_l": self.weights.c_l},
        }


def _window_arrays(series: ObservedSeries, window: Window):
    window.validate(series)
    sl = slice(window.t_i, window.t_c + 1)
    return series.h[sl], series.e[sl], series.l[sl]


def _window_lists(series: ObservedSeries, window: Window):
    return tuple(a.tolist() for a in _window_arrays(series, window))


def estimate_h0(series: ObservedSeries, window: Window) -> float:
    window.validate(series)
    return float(series.h[window.t_i])


def estimate_gamma_ratio_of_means(series: ObservedSeries, window: Window) -> float:
    """Sum of discharges over the window divided by the summed census that produced them."""
    h, _, l = _window_arrays(series, window)
    denominator = float(np.sum(h[:-1]))
    if denominator <= 0:
        raise DegenerateWindowError("census sums to zero over the window")
    return float(np.sum(l[1:])) / denominator


def estimate_gamma_least_squares(series: ObservedSeries, window: Window) -> float:
    """Slope through the origin of discharges regressed on the census."""
    h, _, l = _window_arrays(series, window)
    denominator = float(np.dot(h[:-1], h[:-1]))
    if denominator <= 0:
        raise DegenerateWindowError("census is identically zero over the window")
    return float(np.dot(l[1:], h[:-1])) / denominator


def estimate_gamma(series: ObservedSeries, window: Window, estimator: str = "ratio_of_means") -> float:
    if estimator == "ratio_of_means":
        return estimate_gamma_ratio_of_means(series, window)
    if estimator == "least_squares":
        return estimate_gamma_least_squares(series, window)
    raise ValueError(f"unknown gamma estimator {estimator!r}")


def _phi(beta_bar, s_bar_0, gamma, h0, h_obs, e_obs, l_obs, weights: LossWeights) -> float:
    # hot path of every fit: plain floats, no dataclass validation
    n = len(h_obs) - 1
    s, h = s_bar_0, h0
    r = h - h_obs[0]
    sse_h = r * r
    sse_e = 0.0
    sse_l = 0.0
    for k in range(n):
        inflow = beta_bar * s * h
        outflow = gamma * h
        r = inflow - e_obs[k + 1]
        sse_e += r * r
        r = outflow - l_obs[k + 1]
        sse_l += r * r
        s, h = s - inflow, h + inflow - outflow
        r = h - h_obs[k + 1]
        sse_h += r * r
    value = weights.c_h * sse_h + weights.c_e * sse_e + weights.c_l * sse_l
    return value if math.isfinite(value) else math.inf


def objective_phi(
    beta_bar: float,
    s_bar_0: float,
    gamma: float,
    h0: float,
    series: ObservedSeries,
    window: Window,
    weights: LossWeights = LossWeights(),
) -> float:
    """Weighted sum of squared census, admission and discharge residuals over ``window``.

    Returns +inf when the simulation overflows.
    """
    h, e, l = _window_arrays(series, window)
    values = (float(beta_bar), float(s_bar_0), float(gamma), float(h0))
    if not all(math.isfinite(v) for v in values):
        return math.inf
    return _phi(*values, h.tolist(), e.tolist(), l.tolist(), weights)


def _fitted(series, window, params, initial) -> Trajectory:
    return simulate(initial, params, window.n_steps, start_index=window.t_i)


def _as_fit(series, window, weights, beta_bar, s_bar_0, gamma, h0, phi, method, gamma_estimator, report):
    params = SHParams(float(beta_bar), float(gamma))
    initial = SHState(float(s_bar_0), float(h0))
    try:
        fitted = _fitted(series, window, params, initial)
    except DivergenceError as exc:
        fitted = exc.partial
    return FitResult(
        params=params,
        initial=initial,
        phi_star=float(phi),
        method=method,
        gamma_estimator=gamma_estimator,
        solver=report,
        fitted=fitted,
        window=window,
        weights=weights,
        start_date=series.start_date,
    )


def fit_sequential(
    series: ObservedSeries,
    window: Window,
    weights: LossWeights = LossWeights(),
    guess: Sequence[float] = DEFAULT_GUESS,
    gamma_estimator: str = "ratio_of_means",
    config: SimplexConfig = SimplexConfig(),
) -> FitResult:
    """Fit ``h0`` and ``gamma`` directly, then search ``(beta_bar, s_bar_0)``.

    A non-converged search still yields a result; check ``converged``.
    """
    h_obs, e_obs, l_obs = _window_lists(series, window)
    h0 = estimate_h0(series, window)
    gamma = estimate_gamma(series, window, gamma_estimator)
    if not 0 <= gamma <= 1:
        raise DegenerateWindowError(f"estimated gamma {gamma:.6g} is outside [0, 1]")

    def objective(x):
        beta_bar, s_bar_0 = x
        if beta_bar < 0 or s_bar_0 < 0:
            return math.inf
        return _phi(beta_bar, s_bar_0, gamma, h0, h_obs, e_obs, l_obs, weights)

    report = nelder_mead(objective, np.asarray(guess, dtype=float), config)
    beta_bar, s_bar_0 = report.x_min
    return _as_fit(
        series, window, weights, beta_bar, s_bar_0, gamma, h0, report.f_min, "sequential", gamma_estimator, report
    )


def fit_joint4d(
    series: ObservedSeries,
    window: Window,
    weights: LossWeights = LossWeights(),
    guess: Optional[Sequence[float]] = None,
    gamma_estimator: str = "ratio_of_means",
    config: SimplexConfig = SimplexConfig(),
) -> FitResult:
    """Search all four estimands ``(beta_bar, s_bar_0, gamma, h0)`` at once.

    Without ``guess`` the solver starts from the sequential fit on the same
    window and weights.
    """
    h_obs, e_obs, l_obs = _window_lists(series, window)
    if guess is None:
        seed = fit_sequential(series, window, weights, gamma_estimator=gamma_estimator, config=config)
        guess = seed.estimands

    def objective(x):
        beta_bar, s_bar_0, gamma, h0 = x
        if beta_bar < 0 or s_bar_0 < 0 or h0 < 0 or not 0 <= gamma <= 1:
            return math.inf
        return _phi(beta_bar, s_bar_0, gamma, h0, h_obs, e_obs, l_obs, weights)

    report = nelder_mead(objective, np.asarray(guess, dtype=float), config)
    beta_bar, s_bar_0, gamma, h0 = report.x_min
    return _as_fit(
        series, window, weights, beta_bar, s_bar_0, gamma, h0, report.f_min, "joint4d", gamma_estimator, report
    )


@dataclass(frozen=True)
class ClosedFormEstimate:
    beta_bar: float
    s_bar_0: float
    sign_warning: bool


def estimate_closed_form(series: ObservedSeries, t: int, align_flows: bool = True) -> ClosedFormEstimate:
    """Pointwise estimate of ``beta_bar`` and ``s_bar(t)`` from days ``t`` and ``t + 1``.

    ``beta_bar = dh/h^2 - dE/(E*h)`` and ``s_bar = E/(beta_bar*h)``, where
    ``E(t)`` is the model admission flow of the step leaving day ``t``. With
    ``align_flows`` (the default) that flow is read as ``e[t+1]``, following the
    series convention; otherwise ``e[t]`` is used as is. The second term
    dominates the error whenever ``E*h`` is small. Diagnostic only.
    """
    lag = 1 if align_flows else 0
    if not 0 <= t < len(series) - 1 - lag:
        raise IndexError(f"day {t} needs {1 + lag} successor(s) inside the series")
    h0, h1 = float(series.h[t]), float(series.h[t + 1])
    e0, e1 = float(series.e[t + lag]), float(series.e[t + 1 + lag])
    if h0 == 0 or e0 == 0:
        raise ZeroDivisionError(f"admissions and census at day {t} must be non-zero")
    beta_bar = (h1 - h0) / h0**2 - (e1 - e0) / (e0 * h0)
    if beta_bar == 0:
        raise ZeroDivisionError("estimated beta_bar is zero; s_bar is undefined")
    sign_warning = beta_bar <= 0
    if sign_warning:
        warnings.warn(f"non-positive beta_bar estimate {beta_bar:.3g} at day {t}", RuntimeWarning, stacklevel=2)
    return ClosedFormEstimate(beta_bar, e0 / (beta_bar * h0), sign_warning)
