"""Train/test evaluation of SH fits: forecasts, MAPE, sliding-window sweeps and
the objective contour grid."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from .data import ObservedSeries, format_float
from .estimation import (
    DEFAULT_GUESS,
    FitResult,
    LossWeights,
    Window,
    WindowError,
    _phi,
    _window_lists,
    estimate_gamma,
    estimate_h0,
    fit_joint4d,
    fit_sequential,
)
from .model import simulate

__all__ = [
    "UndefinedMetricError",
    "ForecastResult",
    "BacktestRecord",
    "BacktestReport",
    "ContourGrid",
    "mape",
    "mape_detail",
    "forecast",
    "fit_window",
    "sweep_windows",
    "backtest_sweep",
    "contour_grid",
    "write_forecast_csv",
    "write_backtest_csv",
    "write_contour_csv",
]

CONTOUR_SHIFT = 0.99


class UndefinedMetricError(ValueError):
    pass


def mape_detail(predicted, observed) -> tuple[float, int]:
    """MAPE in percent plus the number of zero observations left out of the mean."""
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if predicted.shape != observed.shape or predicted.ndim != 1 or predicted.size < 1:
        raise ValueError("predicted and observed must be equal-length, non-empty 1-D arrays")
    keep = observed > 0
    if not np.any(keep):
        raise UndefinedMetricError("no positive observations to divide by")
    errors = np.abs(predicted[keep] - observed[keep]) / observed[keep]
    return float(100.0 * np.mean(errors)), int(np.count_nonzero(~keep))


def mape(predicted, observed) -> float:
    return mape_detail(predicted, observed)[0]


@dataclass(frozen=True)
class ForecastResult:
    fit: FitResult
    horizon: int
    until: int
    train_h: np.ndarray  # model census over [t_i, t_c]
    predicted_h: np.ndarray  # over [t_c + 1, until]
    predicted_s_bar: np.ndarray
    train_mape: float
    test_mape: Optional[float]
    train_excluded: int = 0
    test_excluded: int = 0
    test_days_observed: int = 0

    @property
    def model_h(self) -> np.ndarray:
        return np.concatenate((self.train_h, self.predicted_h))

    def to_dict(self) -> dict:
        return {
            "fit": self.fit.to_dict(),
            "horizon": self.horizon,
            "predicted_h": self.predicted_h.tolist(),
            "predicted_s_bar": self.predicted_s_bar.tolist(),
            "train_mape": self.train_mape,
            "test_mape": self.test_mape,
            "train_excluded": self.train_excluded,
            "test_excluded": self.test_excluded,
            "test_days_observed": self.test_days_observed,
        }


def forecast(series: ObservedSeries, fit: FitResult, until: int) -> ForecastResult:
    """Simulate the fitted model from ``t_i`` through day ``until``.

    ``until`` may lie past the end of ``series``; the test MAPE then covers the
    observed part of the test period and is ``None`` when nothing of it is observed.
    """
    w = fit.window
    if until <= w.t_c:
        raise WindowError(f"forecast end {until} must come after the train window end {w.t_c}")
    traj = simulate(fit.initial, fit.params, until - w.t_i, start_index=w.t_i)
    split = w.n_steps + 1
    train_h = traj.h[:split]
    predicted_h = traj.h[split:]
    train_mape, train_excluded = mape_detail(train_h, series.h[w.t_i : w.t_c + 1])

    last_observed = min(until, len(series) - 1)
    n_test = max(0, last_observed - w.t_c)
    test_mape, test_excluded = None, 0
    if n_test > 0:
        try:
            test_mape, test_excluded = mape_detail(predicted_h[:n_test], series.h[w.t_c + 1 : last_observed + 1])
        except UndefinedMetricError:
            test_mape, test_excluded = None, n_test

    return ForecastResult(
        fit=fit,
        horizon=until - w.t_c,
        until=until,
        train_h=train_h,
        predicted_h=predicted_h,
        predicted_s_bar=traj.s_bar[split:],
        train_mape=train_mape,
        test_mape=test_mape,
        train_excluded=train_excluded,
        test_excluded=test_excluded,
        test_days_observed=n_test,
    )


NAN_ESTIMANDS = (math.nan, math.nan, math.nan, math.nan)


@dataclass(frozen=True)
class BacktestRecord:
    window: Window
    fit: Optional[FitResult]
    forecast: Optional[ForecastResult]
    error: str = ""

    @property
    def converged(self) -> bool:
        return self.forecast is not None and self.fit.converged

    @property
    def estimands(self) -> tuple[float, float, float, float]:
        return self.fit.estimands if self.fit is not None else NAN_ESTIMANDS

    @property
    def phi_star(self) -> float:
        return self.fit.phi_star if self.fit is not None else math.nan

    @property
    def test_mape(self) -> Optional[float]:
        return self.forecast.test_mape if self.forecast is not None else None

    @property
    def train_mape(self) -> Optional[float]:
        return self.forecast.train_mape if self.forecast is not None else None

    def to_dict(self, series: ObservedSeries) -> dict:
        beta_bar, s_bar_0, gamma, h0 = self.estimands
        return {
            "window_start": series.date_at(self.window.t_i).isoformat(),
            "window_end": series.date_at(self.window.t_c).isoformat(),
            "beta_bar": beta_bar,
            "gamma": gamma,
            "s_bar_0": s_bar_0,
            "h_0": h0,
            "phi_star": self.phi_star,
            "train_mape": self.train_mape,
            "test_mape": self.test_mape,
            "converged": self.converged,
            "error": self.error or None,
            "solver": self.fit.solver.to_dict() if self.fit is not None and self.fit.solver is not None else None,
        }


@dataclass(frozen=True)
class BacktestReport:
    window_length: int
    stride: int
    method: str
    records: list[BacktestRecord] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        values = []
        for r in self.records:
            beta_bar, s_bar_0, gamma, h0 = r.estimands
            values.append(
                {
                    "beta_bar": beta_bar,
                    "s_bar_0": s_bar_0,
                    "gamma": gamma,
                    "h_0": h0,
                    "phi_star": r.phi_star,
                    "train_mape": r.train_mape,
                    "test_mape": r.test_mape,
                }[name]
            )
        return np.array([np.nan if v is None else v for v in values], dtype=float)

    def to_dict(self, series: ObservedSeries) -> dict:
        return {
            "window_length": self.window_length,
            "stride": self.stride,
            "method": self.method,
            "records": [r.to_dict(series) for r in self.records],
        }


def sweep_windows(n: int, window_length: int, stride: int) -> list[Window]:
    """Windows ``[s, s + window_length - 1]`` for ``s = 0, stride, ...`` leaving at least one test day."""
    if window_length < 3:
        raise WindowError("window_length must be >= 3")
    if stride < 1:
        raise WindowError("stride must be >= 1")
    last_start = n - window_length - 1
    return [Window(s, s + window_length - 1) for s in range(0, last_start + 1, stride)] if last_start >= 0 else []


def fit_window(
    series: ObservedSeries,
    window: Window,
    weights: LossWeights = LossWeights(),
    method: str = "sequential",
    gamma_estimator: str = "ratio_of_means",
    guess: Optional[Sequence[float]] = None,
) -> FitResult:
    """Dispatch to the sequential or joint 4-D fit.

    ``guess`` is the 2-D ``(beta_bar, s_bar_0)`` start of the sequential
    search; for ``joint4d`` that search provides the 4-D seed.
    """
    if method not in ("sequential", "joint4d"):
        raise ValueError(f"unknown fitting method {method!r}")
    fit = fit_sequential(series, window, weights, guess=guess or DEFAULT_GUESS, gamma_estimator=gamma_estimator)
    if method == "sequential":
        return fit
    return fit_joint4d(series, window, weights, guess=fit.estimands, gamma_estimator=gamma_estimator)


def backtest_sweep(
    series: ObservedSeries,
    window_length: int = 14,
    stride: int = 1,
    weights: LossWeights = LossWeights(),
    method: str = "sequential",
    gamma_estimator: str = "ratio_of_means",
    guess: Optional[Sequence[float]] = None,
) -> BacktestReport:
    """Fit every sliding window and forecast to the series end.

    Windows whose forecast diverges are kept, flagged as not converged.
    """
    if stride > len(series):
        raise WindowError(f"stride {stride} exceeds the series length {len(series)}")
    windows = sweep_windows(len(series), window_length, stride)
    if not windows:
        raise WindowError(f"series of {len(series)} days has no room for a {window_length}-day window plus a test day")
    until = len(series) - 1
    records = []
    for window in windows:
        try:
            fit = fit_window(series, window, weights, method, gamma_estimator, guess)
        except ValueError as exc:
            records.append(BacktestRecord(window, None, None, error=str(exc)))
            continue
        try:
            records.append(BacktestRecord(window, fit, forecast(series, fit, until)))
        except ArithmeticError as exc:
            records.append(BacktestRecord(window, fit, None, error=str(exc)))
    return BacktestReport(window_length, stride, method, records)


@dataclass(frozen=True)
class ContourGrid:
    beta_axis: np.ndarray
    s_axis: np.ndarray
    phi: np.ndarray  # raw objective, shape (len(beta_axis), len(s_axis))
    values: np.ndarray  # log(phi - shift * phi_star); NaN where masked
    mask: np.ndarray  # True where values are undefined
    phi_star: float
    gamma: float
    h0: float
    shift: float = CONTOUR_SHIFT

    @property
    def all_masked(self) -> bool:
        return bool(np.all(self.mask))

    def argmin(self) -> Optional[tuple[int, int]]:
        if self.all_masked:
            return None
        masked = np.where(self.mask, np.inf, self.values)
        i, j = np.unravel_index(int(np.argmin(masked)), masked.shape)
        return int(i), int(j)


def contour_grid(
    series: ObservedSeries,
    window: Window,
    beta_axis: Sequence[float],
    s_axis: Sequence[float],
    weights: LossWeights = LossWeights(),
    gamma_estimator: str = "ratio_of_means",
    phi_star: Optional[float] = None,
    shift: float = CONTOUR_SHIFT,
) -> ContourGrid:
    """Tabulate ``log(phi - shift * phi_star)`` over a ``(beta_bar, s_bar_0)`` grid.

    ``gamma`` and ``h0`` are fixed as in the sequential fit; ``phi_star`` is the
    smallest of the grid values and the optional fitted optimum.
    """
    beta_axis = np.asarray(beta_axis, dtype=float)
    s_axis = np.asarray(s_axis, dtype=float)
    for name, axis in (("beta", beta_axis), ("s", s_axis)):
        if axis.ndim != 1 or axis.size < 2 or np.any(np.diff(axis) <= 0):
            raise ValueError(f"{name} axis must be strictly increasing with at least 2 points")
    h_obs, e_obs, l_obs = _window_lists(series, window)
    h0 = estimate_h0(series, window)
    gamma = estimate_gamma(series, window, gamma_estimator)

    phi = np.empty((beta_axis.size, s_axis.size))
    for i, b in enumerate(beta_axis.tolist()):
        for j, s in enumerate(s_axis.tolist()):
            phi[i, j] = _phi(b, s, gamma, h0, h_obs, e_obs, l_obs, weights)

    finite = np.isfinite(phi)
    candidates = phi[finite].tolist()
    if phi_star is not None and math.isfinite(phi_star):
        candidates.append(float(phi_star))
    best = min(candidates) if candidates else math.inf

    shifted = phi - shift * best if math.isfinite(best) else np.full_like(phi, np.nan)
    mask = ~finite | ~(shifted > 0)
    values = np.full_like(phi, np.nan)
    values[~mask] = np.log(shifted[~mask])
    return ContourGrid(beta_axis, s_axis, phi, values, mask, best, gamma, h0, shift)


def _write_rows(rows, out: Union[str, Path, TextIO]) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    else:
        csv.writer(out, lineterminator="\n").writerows(rows)


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else format_float(x)


def write_forecast_csv(series: ObservedSeries, result: ForecastResult, out) -> None:
    w = result.fit.window
    rows = [("date", "H_observed", "H_model", "phase")]
    for k, h_model in enumerate(result.model_h.tolist()):
        t = w.t_i + k
        observed = _fmt(series.h[t]) if t < len(series) else ""
        phase = "train" if t <= w.t_c else ("test" if t < len(series) else "beyond")
        rows.append((series.date_at(t).isoformat(), observed, format_float(h_model), phase))
    _write_rows(rows, out)


BACKTEST_COLUMNS = (
    "window_start",
    "window_end",
    "beta_bar",
    "gamma",
    "s_bar_0",
    "h_0",
    "phi_star",
    "train_mape",
    "test_mape",
    "converged",
)


def write_backtest_csv(series: ObservedSeries, report: BacktestReport, out) -> None:
    rows = [BACKTEST_COLUMNS]
    for record in report.records:
        d = record.to_dict(series)
        rows.append(
            tuple(
                d[c] if c in ("window_start", "window_end") else str(d[c]).lower() if c == "converged" else _fmt(d[c])
                for c in BACKTEST_COLUMNS
            )
        )
    _write_rows(rows, out)


def write_contour_csv(grid: ContourGrid, out) -> None:
    """First row: blank corner then the s axis; each later row: a beta value then its values."""
    rows = [("",) + tuple(format_float(s) for s in grid.s_axis)]
    for i, b in enumerate(grid.beta_axis):
        rows.append((format_float(b),) + tuple("" if grid.mask[i, j] else format_float(grid.values[i, j]) for j in range(grid.s_axis.size)))
    _write_rows(rows, out)
