"""
Site-wise GEV margins and the transform to unit Frechet scale.

Shape convention: xi > 0 is the heavy-tailed (Frechet) case. scipy's
genextreme uses c = -xi.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, Mapping, Optional

import numpy as np
import pandas as pd
import structlog
from scipy.stats import genextreme

from inference.optimizer import maximize
from pipeline.schemas import BlockMaximaPanel, MarginState
from utils.config_utils import get_config
from utils.errors import InitializationError, MarginFitError, ValidationError
from utils.parallel import parallel_map

logger = structlog.get_logger(__name__)

EULER_GAMMA = 0.5772156649015329
GUMBEL_XI_TOL = 1e-6
XI_BOUNDS = (-1.0, 2.0)


@dataclass(frozen=True)
class GevParams:
    xi: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"GEV scale must be positive, got {self.sigma}")

    def logcdf(self, x) -> np.ndarray:
        return genextreme.logcdf(np.asarray(x, dtype=float), c=-self.xi, loc=self.mu, scale=self.sigma)

    def cdf(self, x) -> np.ndarray:
        return np.exp(self.logcdf(x))

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def gev_loglik(data: np.ndarray, mu: float, sigma: float, xi: float) -> float:
    """GEV log-likelihood; -inf outside the support."""
    if sigma <= 0:
        return -math.inf
    y = (data - mu) / sigma
    if abs(xi) < GUMBEL_XI_TOL:
        return float(-len(data) * math.log(sigma) - np.sum(y) - np.sum(np.exp(-y)))
    expr = 1.0 + xi * y
    if np.any(expr <= 0):
        return -math.inf
    log_expr = np.log(expr)
    return float(-len(data) * math.log(sigma) - (1.0 + 1.0 / xi) * np.sum(log_expr)
                 - np.sum(np.exp(-log_expr / xi)))


def gev_fit(sample, site_id: Optional[str] = None) -> GevParams:
    """Maximum-likelihood GEV fit started from Gumbel moment estimates."""
    data = np.asarray(sample, dtype=float)
    data = data[~np.isnan(data)]
    min_obs = int(get_config("GEV_MIN_OBS", 20))
    if data.size < min_obs:
        raise MarginFitError(f"{data.size} observations, need at least {min_obs}", site_id=site_id)
    sd = float(np.std(data, ddof=1))
    if not sd > 0:
        raise MarginFitError("sample is constant", site_id=site_id)

    sigma0 = math.sqrt(6.0) * sd / math.pi
    mu0 = float(np.mean(data)) - EULER_GAMMA * sigma0
    try:
        outcome = maximize(
            lambda th: gev_loglik(data, th[0], th[1], th[2]),
            [mu0, sigma0, 0.0],
            [(-math.inf, math.inf), (0.0, math.inf), XI_BOUNDS],
            label=f"gev:{site_id}" if site_id else "gev",
        )
    except InitializationError as e:
        raise MarginFitError(str(e), site_id=site_id) from e
    if not outcome.converged:
        raise MarginFitError("GEV likelihood maximization did not converge", site_id=site_id)
    mu, sigma, xi = (float(v) for v in outcome.x)
    if abs(xi) < GUMBEL_XI_TOL:
        xi = 0.0
    logger.debug("gev_fitted", site=site_id, mu=mu, sigma=sigma, xi=xi, loglik=outcome.value)
    return GevParams(xi=xi, mu=mu, sigma=sigma)


def fit_margins(panel: BlockMaximaPanel) -> Dict[str, GevParams]:
    """Independent GEV fit per site column, keyed by site id."""
    if panel.margin_state is not MarginState.RAW:
        raise ValidationError("margins are fitted on raw panels")
    fits = parallel_map(lambda j: gev_fit(panel.values[:, j], site_id=panel.site_ids[j]), range(panel.k))
    logger.info("margins_fitted", sites=panel.k, years=panel.n)
    return dict(zip(panel.site_ids, fits))


def margins_table(margins: Mapping[str, GevParams]) -> pd.DataFrame:
    rows = [{"site_id": site, **params.to_dict()} for site, params in margins.items()]
    return pd.DataFrame(rows, columns=["site_id", "xi", "mu", "sigma"])


def to_unit_frechet(panel: BlockMaximaPanel, margins: Mapping[str, GevParams]) -> BlockMaximaPanel:
    """z -> -1 / log G(z) per site; probabilities at 0 or 1 are clipped to the nearest representable value."""
    if panel.margin_state is not MarginState.RAW:
        raise ValidationError("panel is already on the unit Frechet scale")
    missing_sites = [s for s in panel.site_ids if s not in margins]
    if missing_sites:
        raise ValidationError(f"no GEV margins for sites {missing_sites}")
    log_lo = math.log(np.finfo(float).tiny)
    log_hi = math.log1p(-np.finfo(float).eps)
    out = np.full(panel.values.shape, np.nan)
    for j, site in enumerate(panel.site_ids):
        observed = ~panel.missing[:, j]
        logg = margins[site].logcdf(panel.values[observed, j])
        clipped = np.clip(logg, log_lo, log_hi)
        n_clipped = int(np.sum(clipped != logg))
        if n_clipped:
            logger.warning("probability_clipped", site=site, count=n_clipped)
        out[observed, j] = -1.0 / clipped
    return panel.with_values(out, MarginState.UNIT_FRECHET)
