"""Command-line front end: ``shforecast {fit,forecast,backtest,contour,simulate}``.

Exit status: 0 success, 1 bad input (I/O, parsing, inconsistent options),
2 numerical trouble (solver did not converge, simulation diverged). Artifacts
are still written on status 2.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import backtest as bt
from .data import DataError, ObservedSeries, format_float, load_series, write_series_csv
from .estimation import (
    DEFAULT_GUESS,
    DegenerateWindowError,
    LossWeights,
    Window,
    WindowError,
    fit_sequential,
)
from .model import DivergenceError, SHParams, SHState, simulate, write_trajectory_csv

log = logging.getLogger("shforecast")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
DEFAULT_GRID_BETA = (2e-6, 2e-5, 37)
DEFAULT_GRID_S = (2e3, 2e4, 37)


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    input: Optional[Path]
    schema: str
    train_start: Optional[str]
    train_end: Optional[str]
    horizon_end: Optional[str]
    weights: LossWeights
    method: str
    gamma_estimator: str
    guess: Optional[tuple[float, ...]]
    window_length: int
    stride: int
    grid_beta: tuple[float, float, int]
    grid_s: tuple[float, float, int]
    out_dir: Path


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} expects {n} comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what}: non-numeric value in {text!r}") from None


def _grid(text: str) -> tuple[float, float, int]:
    lo, hi, n = _floats(text, 3, "grid axis")
    if not n.is_integer() or n < 2 or not hi > lo:
        raise argparse.ArgumentTypeError(f"grid axis needs min < max and an integer count >= 2, got {text!r}")
    return lo, hi, int(n)


def day_index(value: Optional[str], series: ObservedSeries, default: int) -> int:
    """Resolve an ISO date or a plain integer day index against ``series``."""
    if value is None:
        return default
    text = value.strip()
    if text.lstrip("-").isdigit():
        return int(text)
    try:
        return series.index_of(dt.date.fromisoformat(text))
    except ValueError:
        raise UsageError(f"expected an ISO date or a day index, got {value!r}") from None


def _window(cfg: RunConfig, series: ObservedSeries) -> Window:
    t_i = day_index(cfg.train_start, series, 0)
    t_c = day_index(cfg.train_end, series, len(series) - 1)
    if not 0 <= t_i < len(series):
        raise UsageError(f"train start {cfg.train_start} lies outside the data range")
    return Window(t_i, t_c).validate(series)


def _fit(cfg: RunConfig, series: ObservedSeries, window: Window):
    return bt.fit_window(series, window, cfg.weights, cfg.method, cfg.gamma_estimator, cfg.guess)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, allow_nan=False) + "\n")


def _load(cfg: RunConfig) -> ObservedSeries:
    if cfg.input is None:
        raise UsageError("--input is required")
    return load_series(cfg.input, cfg.schema)


def cmd_fit(cfg: RunConfig) -> int:
    series = _load(cfg)
    window = _window(cfg, series)
    fit = _fit(cfg, series, window)
    fitted_h = fit.fitted.h
    fit_mape = bt.mape(fitted_h, series.h[window.t_i : window.t_i + fitted_h.size])
    payload = fit.to_dict() | {"fit_mape": fit_mape}

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "fit.json", payload)
    rows = ["date,H_observed,H_model,phase"]
    for k, h in enumerate(fitted_h.tolist()):
        t = window.t_i + k
        rows.append(f"{series.date_at(t).isoformat()},{format_float(series.h[t])},{format_float(h)},train")
    (cfg.out_dir / "fit_series.csv").write_text("\n".join(rows) + "\n")

    print(f"fit_mape={fit_mape:.4f}")
    beta_bar, s_bar_0, gamma, h0 = (format_float(v) for v in fit.estimands)
    print(f"beta_bar={beta_bar} gamma={gamma} s_bar_0={s_bar_0} h_0={h0}")
    if not fit.converged or fit.fitted.n_days != window.n_steps:
        print(f"solver did not converge ({fit.solver.termination_reason})", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_forecast(cfg: RunConfig) -> int:
    series = _load(cfg)
    window = _window(cfg, series)
    until = day_index(cfg.horizon_end, series, len(series) - 1)
    if until <= window.t_c:
        raise UsageError(f"horizon end (day {until}) must come after the train window end (day {window.t_c})")
    fit = _fit(cfg, series, window)
    result = bt.forecast(series, fit, until)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "forecast.json", result.to_dict())
    bt.write_forecast_csv(series, result, cfg.out_dir / "forecast_series.csv")

    print(f"train_mape={result.train_mape:.4f}")
    print("test_mape=" + ("n/a" if result.test_mape is None else f"{result.test_mape:.4f}"))
    if not fit.converged:
        print(f"solver did not converge ({fit.solver.termination_reason})", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_backtest(cfg: RunConfig) -> int:
    series = _load(cfg)
    report = bt.backtest_sweep(
        series,
        window_length=cfg.window_length,
        stride=cfg.stride,
        weights=cfg.weights,
        method=cfg.method,
        gamma_estimator=cfg.gamma_estimator,
        guess=cfg.guess,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "backtest.json", report.to_dict(series))
    bt.write_backtest_csv(series, report, cfg.out_dir / "backtest.csv")

    n_ok = sum(r.converged for r in report.records)
    print(f"windows={len(report.records)} converged={n_ok}")
    return EXIT_OK if n_ok >= 1 else EXIT_NUMERIC


def cmd_contour(cfg: RunConfig) -> int:
    series = _load(cfg)
    window = _window(cfg, series)
    fit = fit_sequential(
        series, window, cfg.weights, guess=cfg.guess or DEFAULT_GUESS, gamma_estimator=cfg.gamma_estimator
    )
    beta_axis = np.linspace(*cfg.grid_beta)
    s_axis = np.linspace(*cfg.grid_s)
    grid = bt.contour_grid(
        series, window, beta_axis, s_axis, cfg.weights, cfg.gamma_estimator, phi_star=fit.phi_star
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    bt.write_contour_csv(grid, cfg.out_dir / "contour.csv")

    print(f"fitted beta_bar={format_float(fit.params.beta_bar)} s_bar_0={format_float(fit.initial.s_bar)}")
    cell = grid.argmin()
    if cell is None:
        log.warning("every grid cell is masked (objective overflow or at the shift floor)")
    else:
        print(f"grid_min beta_bar={format_float(grid.beta_axis[cell[0]])} s_bar_0={format_float(grid.s_axis[cell[1]])}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        params = SHParams(args.beta_bar, args.gamma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.days < 1:
        raise UsageError("--days must be >= 1")
    out_dir = Path(args.out_dir)
    start = dt.date.fromisoformat(args.start_date)
    try:
        traj = simulate(SHState(args.s_bar, args.h0), params, args.days)
    except DivergenceError as exc:
        print(f"simulation diverged at day {exc.day}", file=sys.stderr)
        if exc.partial is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_trajectory_csv(exc.partial, out_dir / "trajectory.csv")
        return EXIT_NUMERIC
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, out_dir / "trajectory.csv")
    # also as an observed series, consumable with --schema series
    write_series_csv(traj.to_observed(start), out_dir / "series.csv")
    print(f"days={args.days} h_final={format_float(traj.h[-1])}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shforecast", description="Fit and backtest the SH hospitalization model.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", type=Path, help="input CSV file")
    common.add_argument("--schema", choices=("belgium", "france", "series"), default="belgium")
    common.add_argument("--train-start", help="ISO date or day index (default: series start)")
    common.add_argument("--train-end", help="ISO date or day index, inclusive (default: series end)")
    common.add_argument("--horizon-end", help="last forecast day, ISO date or day index (default: series end)")
    common.add_argument("--weights", type=lambda s: LossWeights(*_floats(s, 3, "--weights")), default=LossWeights(), metavar="cH,cE,cL")
    common.add_argument("--method", choices=("sequential", "joint4d"), default="sequential")
    common.add_argument("--gamma-estimator", choices=("ratio_of_means", "least_squares"), default="ratio_of_means")
    common.add_argument(
        "--guess",
        type=lambda s: _floats(s, 2, "--guess"),
        metavar="beta,sbar",
        help="initial (beta_bar, s_bar_0); for joint4d it seeds the sequential pre-fit",
    )
    common.add_argument("--window-length", type=int, default=14)
    common.add_argument("--stride", type=int, default=1)
    common.add_argument("--grid-beta", type=_grid, default=DEFAULT_GRID_BETA, metavar="min,max,n")
    common.add_argument("--grid-s", type=_grid, default=DEFAULT_GRID_S, metavar="min,max,n")
    common.add_argument("--out-dir", type=Path, default=Path("."))

    for name, help_ in (
        ("fit", "fit the model on a train window"),
        ("forecast", "fit, then forecast past the train window"),
        ("backtest", "sliding-window fit/forecast sweep"),
        ("contour", "tabulate log(phi - 0.99 phi*) over a (beta_bar, s_bar_0) grid"),
    ):
        sub.add_parser(name, parents=[common], help=help_)

    sim = sub.add_parser("simulate", help="integrate the model from explicit estimands")
    sim.add_argument("--beta-bar", type=float, required=True)
    sim.add_argument("--gamma", type=float, required=True)
    sim.add_argument("--s-bar", type=float, required=True)
    sim.add_argument("--h0", type=float, required=True)
    sim.add_argument("--days", type=int, required=True)
    sim.add_argument("--start-date", default="2020-01-01")
    sim.add_argument("--out-dir", default=".")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        input=args.input,
        schema=args.schema,
        train_start=args.train_start,
        train_end=args.train_end,
        horizon_end=args.horizon_end,
        weights=args.weights,
        method=args.method,
        gamma_estimator=args.gamma_estimator,
        guess=args.guess,
        window_length=args.window_length,
        stride=args.stride,
        grid_beta=args.grid_beta,
        grid_s=args.grid_s,
        out_dir=args.out_dir,
    )


COMMANDS = {"fit": cmd_fit, "forecast": cmd_forecast, "backtest": cmd_backtest, "contour": cmd_contour}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        return COMMANDS[args.command](_config(args))
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, WindowError, DegenerateWindowError, UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
