"""
Nelder-Mead maximization on a box-transformed parameter space.

The initial simplex has the start point as vertex 0 and the best point ever
evaluated is returned, so a call never ends below its own starting value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import minimize

from inference.transforms import Z_CLIP, BoxTransform
from utils.config_utils import get_config
from utils.errors import InitializationError, NumericalError

logger = structlog.get_logger(__name__)

# finite stand-in for non-finite objective values inside the simplex
_WORST = 1e300


@dataclass(frozen=True)
class OptimizerSettings:
    max_evals: int = 4000
    xatol: float = 1e-6
    fatol: float = 1e-8
    restarts: int = 3
    initial_step: float = 0.5

    @classmethod
    def from_config(cls) -> "OptimizerSettings":
        return cls(
            max_evals=int(get_config("NM_MAX_EVALS", 4000)),
            xatol=float(get_config("NM_XATOL", 1e-6)),
            fatol=float(get_config("NM_FATOL", 1e-8)),
            restarts=int(get_config("NM_RESTARTS", 3)),
            initial_step=float(get_config("NM_INITIAL_STEP", 0.5)),
        )


@dataclass
class OptimizationOutcome:
    x: np.ndarray
    value: float
    start_value: float
    converged: bool
    n_evaluations: int
    n_runs: int


class _BestTracker:
    def __init__(self, objective: Callable[[np.ndarray], float], transform: BoxTransform):
        self.objective = objective
        self.transform = transform
        self.best_x: Optional[np.ndarray] = None
        self.best_value = -math.inf
        self.n_evaluations = 0

    def evaluate(self, theta: np.ndarray) -> float:
        self.n_evaluations += 1
        try:
            value = float(self.objective(theta))
        except NumericalError:
            value = -math.inf
        if math.isfinite(value) and value > self.best_value:
            self.best_value = value
            self.best_x = np.array(theta, dtype=float)
        return value

    def negated(self, z: np.ndarray) -> float:
        value = self.evaluate(self.transform.from_free(z))
        return -value if math.isfinite(value) else _WORST


def _initial_simplex(transform: BoxTransform, theta: np.ndarray, step: float) -> np.ndarray:
    z0 = transform.to_free(theta)
    at_bound = (np.abs(z0) >= Z_CLIP) & np.array([k != "identity" for k in transform.kind], dtype=bool)
    simplex = np.tile(z0, (len(z0) + 1, 1))
    for i in range(len(z0)):
        if at_bound[i]:
            simplex[i + 1, i] = transform.step_in(i, theta[i])
        else:
            simplex[i + 1, i] = z0[i] + step
    return simplex


def maximize(
    objective: Callable[[np.ndarray], float],
    theta0: Sequence[float],
    bounds: Sequence[Tuple[float, float]],
    settings: Optional[OptimizerSettings] = None,
    label: str = "",
) -> OptimizationOutcome:
    """Maximize `objective(theta)` inside `bounds` with restarted Nelder-Mead."""
    settings = settings or OptimizerSettings.from_config()
    theta0 = np.asarray(theta0, dtype=float)
    transform = BoxTransform(bounds)
    tracker = _BestTracker(objective, transform)

    start_value = tracker.evaluate(theta0)
    if not math.isfinite(start_value):
        raise InitializationError("log-likelihood is not finite at the initial point", stage=label)
    if theta0.size == 0:
        return OptimizationOutcome(theta0, start_value, start_value, True, 1, 0)

    converged = False
    n_runs = 0
    previous = start_value
    for run in range(1 + max(0, settings.restarts)):
        simplex = _initial_simplex(transform, tracker.best_x, settings.initial_step)
        result = minimize(
            tracker.negated,
            simplex[0],
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "xatol": settings.xatol,
                "fatol": settings.fatol,
                "maxfev": settings.max_evals,
                "adaptive": len(theta0) > 4,
            },
        )
        n_runs += 1
        final = result.final_simplex[0]
        diameter = float(np.max(np.abs(final[1:] - final[0]))) if len(final) > 1 else 0.0
        converged = bool(result.success) and diameter <= settings.xatol
        improvement = tracker.best_value - previous
        previous = tracker.best_value
        logger.debug("nelder_mead_run", stage=label, run=run, loglik=tracker.best_value,
                     improvement=improvement, evaluations=int(result.nfev), converged=converged)
        if run > 0 and improvement <= settings.fatol * max(1.0, abs(previous)):
            break

    logger.info("optimization_finished", stage=label, start=start_value, loglik=tracker.best_value,
                evaluations=tracker.n_evaluations, runs=n_runs, converged=converged)
    return OptimizationOutcome(tracker.best_x, tracker.best_value, start_value, converged,
                               tracker.n_evaluations, n_runs)
