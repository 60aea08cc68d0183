"""Derivative-free Nelder-Mead simplex minimisation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np


@dataclass(frozen=True)
class SimplexConfig:
    """Nelder-Mead settings.

    Iteration stops once the objective spread over the simplex is below
    ``tolerance`` and every vertex lies within ``x_tolerance`` of the best one
    (per coordinate), or after ``max_iters`` iterations.  Set ``x_tolerance``
    to ``None`` to stop on the objective spread alone.
    """

    tolerance: float = 1e-6
    x_tolerance: float | None = 1e-6
    max_iters: int = 3000
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    penalty_value: float = 1e10
    step_fraction: float = 0.05
    step_floor: float = 0.05

    def __post_init__(self) -> None:
        coeffs = (self.reflection, self.expansion, self.contraction, self.shrink)
        if min(coeffs) <= 0:
            raise ValueError("simplex coefficients must be positive")
        if not self.expansion > 1 > self.contraction:
            raise ValueError("need expansion > 1 > contraction")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


class SimplexResult(NamedTuple):
    x: np.ndarray
    value: float
    iterations: int
    converged: bool


def initial_simplex(start: np.ndarray, config: SimplexConfig) -> np.ndarray:
    dim = len(start)
    simplex = np.tile(start, (dim + 1, 1))
    for i in range(dim):
        simplex[i + 1, i] += max(config.step_fraction * abs(start[i]), config.step_floor)
    return simplex


def _converged(simplex: np.ndarray, values: np.ndarray, config: SimplexConfig) -> bool:
    if values[-1] - values[0] >= config.tolerance:
        return False
    if config.x_tolerance is None:
        return True
    return bool(np.max(np.abs(simplex[1:] - simplex[0])) <= config.x_tolerance)


def nelder_mead_minimize(
    objective: Callable[[np.ndarray], float],
    start,
    config: SimplexConfig = SimplexConfig(),
) -> SimplexResult:
    """Minimise ``objective`` starting from ``start``.

    ``objective`` must be total (return a float for every input); constraint
    handling is the caller's job, typically by returning a large penalty.
    """
    start = np.asarray(start, dtype=float).ravel()
    if start.size == 0:
        raise ValueError("nelder_mead_minimize needs at least one dimension")
    dim = start.size
    rho, chi, psi, sigma = config.reflection, config.expansion, config.contraction, config.shrink

    simplex = initial_simplex(start, config)
    values = np.array([objective(x) for x in simplex], dtype=float)

    iterations = 0
    converged = False
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if _converged(simplex, values, config):
            converged = True
            break
        if iterations >= config.max_iters:
            break
        iterations += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + rho * (centroid - worst)
        fr = objective(xr)

        if fr < values[0]:
            xe = centroid + chi * (xr - centroid)
            fe = objective(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue

        if fr < values[-1]:
            xc = centroid + psi * (xr - centroid)
            fc = objective(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + psi * (worst - centroid)
            fc = objective(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue

        best = simplex[0]
        for i in range(1, dim + 1):
            simplex[i] = best + sigma * (simplex[i] - best)
            values[i] = objective(simplex[i])

    return SimplexResult(simplex[0].copy(), float(values[0]), iterations, converged)
