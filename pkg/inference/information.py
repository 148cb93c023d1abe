"""
Takeuchi information criterion for block-decomposed composite likelihoods.

TIC = -2 l(psi) + 2 tr(J H^-1), with H the negative Hessian of the total
log-likelihood and J the sum over blocks (years) of outer products of the
per-block scores. Both come from central finite differences with step
h_i = max(FD_MIN_STEP, FD_REL_STEP * |psi_i|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import structlog

from inference.likelihood import PairwiseObjective
from pipeline.schemas import BlockMaximaPanel, FitReport, SiteSet
from utils.config_utils import get_config
from utils.errors import OptimizationError, TICError, ValidationError

logger = structlog.get_logger(__name__)

BlockLoglik = Callable[[np.ndarray], np.ndarray]


@dataclass
class SandwichResult:
    trace: float
    score_cov: np.ndarray
    hessian: np.ndarray
    condition_number: float
    used_pinv: bool = False

    @property
    def penalty(self) -> float:
        return 2.0 * self.trace


def _stencil(theta: np.ndarray, bounds: Optional[Sequence[Tuple[float, float]]]) -> Tuple[np.ndarray, np.ndarray]:
    """Steps and a center such that center +- step stays inside the bounds."""
    h_min = float(get_config("FD_MIN_STEP", 1e-5))
    h_rel = float(get_config("FD_REL_STEP", 1e-4))
    h = np.maximum(h_min, h_rel * np.abs(theta))
    center = theta.copy()
    if bounds is None:
        return center, h
    for i, (lo, hi) in enumerate(bounds):
        if hi - lo < 2 * h[i]:
            h[i] = (hi - lo) / 2.0
            center[i] = lo + h[i]
        elif center[i] - h[i] < lo:
            center[i] = lo + h[i]
        elif center[i] + h[i] > hi:
            center[i] = hi - h[i]
        if center[i] != theta[i]:
            logger.warning("fd_center_shifted", index=i, value=float(theta[i]), center=float(center[i]))
    return center, h


def block_derivatives(
    per_block_loglik: BlockLoglik,
    theta: Sequence[float],
    bounds: Optional[Sequence[Tuple[float, float]]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-block scores (n_blocks, p) and the Hessian (p, p) of the summed log-likelihood."""
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    center, h = _stencil(theta, bounds)
    base = np.asarray(per_block_loglik(center), dtype=float)
    plus = np.empty((p,) + base.shape)
    minus = np.empty((p,) + base.shape)
    for i in range(p):
        e = np.zeros(p)
        e[i] = h[i]
        plus[i] = per_block_loglik(center + e)
        minus[i] = per_block_loglik(center - e)
    scores = ((plus - minus) / (2.0 * h[:, None])).T

    total0 = base.sum()
    hess = np.empty((p, p))
    for i in range(p):
        hess[i, i] = (plus[i].sum() - 2.0 * total0 + minus[i].sum()) / h[i] ** 2
        for j in range(i + 1, p):
            ei = np.zeros(p)
            ej = np.zeros(p)
            ei[i] = h[i]
            ej[j] = h[j]
            fpp = per_block_loglik(center + ei + ej).sum()
            fpm = per_block_loglik(center + ei - ej).sum()
            fmp = per_block_loglik(center - ei + ej).sum()
            fmm = per_block_loglik(center - ei - ej).sum()
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
    return scores, hess


def sandwich_penalty(
    per_block_loglik: BlockLoglik,
    theta_hat: Sequence[float],
    bounds: Optional[Sequence[Tuple[float, float]]] = None,
    allow_pinv: bool = False,
) -> SandwichResult:
    """tr(J H^-1) for a log-likelihood that decomposes into independent blocks."""
    scores, hess = block_derivatives(per_block_loglik, theta_hat, bounds)
    if scores.shape[0] < 2:
        raise ValidationError("the score covariance needs at least two blocks")
    H = -hess
    J = scores.T @ scores
    cond = float(np.linalg.cond(H)) if H.size else 1.0
    max_cond = float(get_config("TIC_MAX_COND", 1e12))
    used_pinv = False
    if not math.isfinite(cond) or cond > max_cond:
        if not allow_pinv:
            raise TICError("Hessian is numerically singular", condition_number=cond)
        logger.warning("tic_pinv_fallback", condition_number=cond)
        H_inv = np.linalg.pinv(H)
        used_pinv = True
    else:
        H_inv = np.linalg.inv(H)
    trace = float(np.trace(J @ H_inv))
    return SandwichResult(trace, J, H, cond, used_pinv)


def tic(panel: BlockMaximaPanel, sites: SiteSet, fitted: FitReport, allow_pinv: bool = False) -> float:
    """TIC of a fitted model; also stores the score covariance and Hessian on the report."""
    if not fitted.converged:
        raise OptimizationError(f"{fitted.spec.label} did not converge; TIC needs a converged fit")
    objective = PairwiseObjective(panel, sites)
    spec = fitted.spec
    names = fitted.free_names or spec.free_names
    bounds = [spec.bounds[n] for n in names]

    def per_year(theta: np.ndarray) -> np.ndarray:
        return objective.by_year(spec.with_params(dict(zip(names, theta))))

    result = sandwich_penalty(per_year, spec.vector(names), bounds, allow_pinv=allow_pinv)
    value = -2.0 * fitted.loglik + result.penalty
    fitted.tic = value
    fitted.score_cov = result.score_cov
    fitted.hessian = result.hessian
    fitted.free_names = tuple(names)
    if result.trace < 0:
        logger.warning("negative_tic_penalty", model=spec.label, trace=result.trace)
    logger.info("tic_computed", model=spec.label, tic=value, loglik=fitted.loglik,
                penalty=result.penalty, condition_number=result.condition_number)
    return value
