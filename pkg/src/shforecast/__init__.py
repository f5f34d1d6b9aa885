"""Fit, forecast and backtest the two-compartment SH hospitalization model."""

from .backtest import (
    BacktestReport,
    ContourGrid,
    ForecastResult,
    backtest_sweep,
    contour_grid,
    fit_window,
    forecast,
    mape,
)
from .data import ObservedSeries, aggregate_national, load_series, parse_belgium_csv, parse_france_csv, reconcile_flows
from .estimation import (
    FitResult,
    LossWeights,
    Window,
    estimate_closed_form,
    estimate_gamma_least_squares,
    estimate_gamma_ratio_of_means,
    estimate_h0,
    fit_joint4d,
    fit_sequential,
    objective_phi,
)
from .model import SHParams, SHState, Trajectory, euler_step, simulate, threshold_diagnostic
from .optimizer import SimplexConfig, SolveReport, nelder_mead

__version__ = "0.1.0"
