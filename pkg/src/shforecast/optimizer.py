"""Derivative-free Nelder-Mead simplex minimizer.

The iteration and its defaults follow the classic ``fmin`` flavour of the
method: a 5% relative initial simplex, absolute x/f tolerances of 1e-4 that
must both be met, and caps of 200 iterations and 200 evaluations per
dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SimplexConfig",
    "SolveReport",
    "InitializationError",
    "nelder_mead",
]

NONZERO_DELTA = 0.05
ZERO_DELTA = 0.00025


class InitializationError(ValueError):
    """Raised when the objective is not finite at the starting point."""


@dataclass(frozen=True)
class SimplexConfig:
    x_tolerance: float = 1e-4
    f_tolerance: float = 1e-4
    max_iterations: Optional[int] = None  # None -> 200 * dimension
    max_evaluations: Optional[int] = None  # None -> 200 * dimension
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5

    def __post_init__(self):
        if not (self.x_tolerance > 0 and self.f_tolerance > 0):
            raise ValueError("tolerances must be positive")
        if not self.reflection > 0:
            raise ValueError("reflection coefficient must be > 0")
        if not self.expansion > 1:
            raise ValueError("expansion coefficient must be > 1")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction coefficient must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink coefficient must lie in (0, 1)")
        for cap in (self.max_iterations, self.max_evaluations):
            if cap is not None and cap < 1:
                raise ValueError("iteration/evaluation caps must be >= 1")

    def caps(self, dim: int) -> tuple[int, int]:
        max_iter = self.max_iterations if self.max_iterations is not None else 200 * dim
        max_eval = self.max_evaluations if self.max_evaluations is not None else 200 * dim
        return max_iter, max_eval


@dataclass(frozen=True)
class SolveReport:
    x_min: np.ndarray
    f_min: float
    iterations: int
    evaluations: int
    converged: bool
    termination_reason: str  # "tolerance" | "max_iterations" | "max_evaluations"
    best_history: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "termination_reason": self.termination_reason,
        }


def initial_simplex(x0: np.ndarray) -> np.ndarray:
    """Vertices of the starting simplex: x0 plus one 5%-perturbed copy per axis."""
    n = x0.size
    sim = np.empty((n + 1, n), dtype=float)
    sim[0] = x0
    for k in range(n):
        y = x0.copy()
        if y[k] != 0:
            y[k] = (1 + NONZERO_DELTA) * y[k]
        else:
            y[k] = ZERO_DELTA
        sim[k + 1] = y
    return sim


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float],
    config: SimplexConfig = SimplexConfig(),
) -> SolveReport:
    """Minimize ``objective`` starting from ``x0``.

    Non-finite objective values met after the start are treated as +inf,
    so the simplex backs away from regions where the objective blows up.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    if n < 1:
        raise ValueError("x0 must have at least one coordinate")
    max_iter, max_eval = config.caps(n)
    rho, chi, psi, sigma = (
        config.reflection,
        config.expansion,
        config.contraction,
        config.shrink,
    )

    evaluations = 0

    def f(x: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        value = float(objective(x))
        return value if math.isfinite(value) else math.inf

    f0 = float(objective(x0))
    evaluations += 1
    if not math.isfinite(f0):
        raise InitializationError(f"objective is not finite at x0 (got {f0!r})")

    sim = initial_simplex(x0)
    fsim = np.empty(n + 1, dtype=float)
    fsim[0] = f0
    for k in range(1, n + 1):
        fsim[k] = f(sim[k])

    order = np.argsort(fsim, kind="stable")
    sim, fsim = sim[order], fsim[order]
    history = [float(fsim[0])]

    iterations = 1
    while evaluations < max_eval and iterations < max_iter:
        if (
            np.max(np.abs(sim[1:] - sim[0])) <= config.x_tolerance
            and np.max(np.abs(fsim[0] - fsim[1:])) <= config.f_tolerance
        ):
            break

        xbar = np.add.reduce(sim[:-1], 0) / n
        xr = (1 + rho) * xbar - rho * sim[-1]
        fxr = f(xr)
        shrink = False

        if fxr < fsim[0]:
            xe = (1 + rho * chi) * xbar - rho * chi * sim[-1]
            fxe = f(xe)
            if fxe < fxr:
                sim[-1], fsim[-1] = xe, fxe
            else:
                sim[-1], fsim[-1] = xr, fxr
        elif fxr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fxr
        elif fxr < fsim[-1]:
            # outside contraction
            xc = (1 + psi * rho) * xbar - psi * rho * sim[-1]
            fxc = f(xc)
            if fxc <= fxr:
                sim[-1], fsim[-1] = xc, fxc
            else:
                shrink = True
        else:
            # inside contraction
            xcc = (1 - psi) * xbar + psi * sim[-1]
            fxcc = f(xcc)
            if fxcc < fsim[-1]:
                sim[-1], fsim[-1] = xcc, fxcc
            else:
                shrink = True

        if shrink:
            for j in range(1, n + 1):
                sim[j] = sim[0] + sigma * (sim[j] - sim[0])
                fsim[j] = f(sim[j])

        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
        history.append(float(fsim[0]))
        iterations += 1

    if evaluations >= max_eval:
        reason = "max_evaluations"
    elif iterations >= max_iter:
        reason = "max_iterations"
    else:
        reason = "tolerance"

    return SolveReport(
        x_min=sim[0].copy(),
        f_min=float(fsim[0]),
        iterations=iterations,
        evaluations=evaluations,
        converged=reason == "tolerance",
        termination_reason=reason,
        best_history=tuple(history),
    )
