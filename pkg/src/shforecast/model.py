"""The SH model: scaled susceptibles ``s_bar`` and hospital census ``h``.

Integration is the one-day explicit Euler recursion

    s_bar[t+1] = s_bar[t] - beta_bar * s_bar[t] * h[t]
    h[t+1]     = h[t] + beta_bar * s_bar[t] * h[t] - gamma * h[t]

with admissions ``E = beta_bar * s_bar * h`` and discharges ``L = gamma * h``
evaluated at the left end of each step.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, TextIO, Union

import numpy as np

from .data import ObservedSeries, format_float

__all__ = [
    "SHParams",
    "SHState",
    "Trajectory",
    "DivergenceError",
    "euler_step",
    "simulate",
    "threshold_diagnostic",
    "write_trajectory_csv",
]


class DivergenceError(ArithmeticError):
    """Simulation produced a non-finite state.

    ``day`` is the offset (from the initial state) of the first bad state and
    ``partial`` holds the finite prefix of the run.
    """

    def __init__(self, day: int, partial: Optional["Trajectory"] = None):
        super().__init__(f"simulation diverged at day {day}")
        self.day = day
        self.partial = partial


@dataclass(frozen=True)
class SHParams:
    beta_bar: float
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.beta_bar) and math.isfinite(self.gamma)):
            raise ValueError("SH parameters must be finite")
        if self.beta_bar < 0:
            raise ValueError(f"beta_bar must be >= 0, got {self.beta_bar}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class SHState:
    s_bar: float
    h: float


@dataclass(frozen=True)
class Trajectory:
    start_index: int
    s_bar: np.ndarray  # n_days + 1 states
    h: np.ndarray
    e: np.ndarray  # n_days flows, left endpoints
    l: np.ndarray

    def __len__(self) -> int:
        return int(self.h.size)

    @property
    def n_days(self) -> int:
        return int(self.e.size)

    def state(self, k: int) -> SHState:
        return SHState(float(self.s_bar[k]), float(self.h[k]))

    def to_observed(self, start_date: dt.date, label: str = "simulated") -> ObservedSeries:
        """Noiseless observations: ``e[t], l[t]`` carry the flows of the step ending on day ``t``."""
        e = np.concatenate(([0.0], self.e))
        l = np.concatenate(([0.0], self.l))
        return ObservedSeries(start_date, self.h.copy(), e, l, label)


def euler_step(state: SHState, params: SHParams) -> SHState:
    s, h = state.s_bar, state.h
    if not (math.isfinite(s) and math.isfinite(h)):
        raise ValueError(f"non-finite state {state}")
    b, g = params.beta_bar, params.gamma
    return SHState(s - b * s * h, h + b * s * h - g * h)


def simulate(initial: SHState, params: SHParams, n_days: int, start_index: int = 0) -> Trajectory:
    """Run the recursion for ``n_days`` steps; the result holds ``n_days + 1`` states."""
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    b, g = float(params.beta_bar), float(params.gamma)
    s, h = float(initial.s_bar), float(initial.h)
    if not (math.isfinite(s) and math.isfinite(h)):
        raise ValueError(f"non-finite initial state {initial}")
    ss = [s]
    hs = [h]
    es = []
    ls = []
    for day in range(1, n_days + 1):
        inflow = b * s * h
        outflow = g * h
        s, h = s - inflow, h + inflow - outflow
        if not (math.isfinite(s) and math.isfinite(h) and math.isfinite(inflow)):
            partial = None
            if day > 1:
                partial = Trajectory(start_index, np.array(ss), np.array(hs), np.array(es), np.array(ls))
            raise DivergenceError(day, partial)
        es.append(inflow)
        ls.append(outflow)
        ss.append(s)
        hs.append(h)
    return Trajectory(start_index, np.array(ss), np.array(hs), np.array(es), np.array(ls))


def threshold_diagnostic(traj: Trajectory, params: SHParams) -> np.ndarray:
    """Sign of ``beta_bar * s_bar[t] - gamma`` for every step of ``traj``.

    For positive census, +1 means ``h`` grows over step ``t``, -1 that it shrinks
    and 0 that it stays put.
    """
    if traj.n_days < 1:
        raise ValueError("trajectory has no steps")
    return np.sign(params.beta_bar * traj.s_bar[:-1] - params.gamma)


def write_trajectory_csv(traj: Trajectory, out: Union[str, Path, TextIO]) -> None:
    rows = [("day", "S_bar", "H", "E", "L")]
    for k in range(len(traj)):
        flows = (format_float(traj.e[k]), format_float(traj.l[k])) if k < traj.n_days else ("", "")
        rows.append((str(traj.start_index + k), format_float(traj.s_bar[k]), format_float(traj.h[k]), *flows))
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    else:
        csv.writer(out, lineterminator="\n").writerows(rows)
