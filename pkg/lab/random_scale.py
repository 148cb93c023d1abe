"""
Random-scale constructions Z(s) = Y(s) * Z_Y(s) at two sites.

Y(s1), Y(s2) are independent alpha-Pareto variables and, given Y, the pair
Z_Y is Brown-Resnick with a variogram chosen by a rule of (y1, y2). Three
regimes show asymptotic independence (heavy Y, alpha < 1), asymptotic
dependence (light Y, alpha > 1) and independence forced by the variogram
growing with |y1 - y2| (alpha = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy import integrate
from tqdm import tqdm

from pipeline.schemas import ChiCurve
from simulation.exact import simulate_br_pairs
from utils.config_utils import get_config
from utils.errors import DomainError, InsufficientDataError, ValidationError
from utils.parallel import parallel_map, spawn_generators

logger = structlog.get_logger(__name__)

PairVarioRule = Callable[[np.ndarray, np.ndarray], np.ndarray]

DEFAULT_THRESHOLDS = (0.9, 0.95, 0.99, 0.995, 0.999)
CHUNK_SIZE = 100_000


def constant_rule(gamma: float) -> PairVarioRule:
    return lambda y1, y2: np.full(np.shape(y1), float(gamma))


def power_difference_rule(c: float = 1.0, kappa: float = 2.0, eps: float = 1e-6) -> PairVarioRule:
    """gamma = c |y1 - y2|^kappa + eps."""
    return lambda y1, y2: c * np.abs(np.asarray(y1) - np.asarray(y2)) ** kappa + eps


def _simulate_chunk(alpha: float, rule: PairVarioRule, size: int, rng: np.random.Generator) -> np.ndarray:
    y = 1.0 + rng.pareto(alpha, size=(size, 2))
    gamma = np.asarray(rule(y[:, 0], y[:, 1]), dtype=float)
    return y * simulate_br_pairs(gamma, rng)


def simulate_random_scale(
    alpha: float,
    pair_vario_rule: PairVarioRule,
    n: int,
    seed: Optional[int] = None,
    progress: bool = False,
) -> np.ndarray:
    """n draws of (Z(s1), Z(s2)); chunk i depends only on (seed, i)."""
    if not (math.isfinite(alpha) and alpha > 0):
        raise DomainError(f"Pareto index must be positive, got {alpha}")
    if n < 1:
        raise ValidationError("need at least one draw")
    sizes = [CHUNK_SIZE] * (n // CHUNK_SIZE) + ([n % CHUNK_SIZE] if n % CHUNK_SIZE else [])
    rngs = spawn_generators(seed, len(sizes))
    items = list(zip(sizes, rngs))
    with tqdm(total=n, desc="random-scale draws", disable=not progress) as bar:
        def run(item):
            size, rng = item
            out = _simulate_chunk(alpha, pair_vario_rule, size, rng)
            bar.update(size)
            return out
        chunks = parallel_map(run, items)
    return np.vstack(chunks)


def empirical_chi(sample: np.ndarray, thresholds: Sequence[float] = DEFAULT_THRESHOLDS, regime: str = "") -> ChiCurve:
    """chi_hat(p) = #{both columns above their p-quantile} / #{column 1 above its p-quantile}."""
    sample = np.asarray(sample, dtype=float)
    if sample.ndim != 2 or sample.shape[1] != 2:
        raise ValidationError("sample must have two columns")
    p = np.asarray(thresholds, dtype=float)
    q = np.quantile(sample, p, axis=0)
    chi = np.full(p.size, np.nan)
    counts = np.zeros(p.size, dtype=int)
    for i in range(p.size):
        first = sample[:, 0] > q[i, 0]
        counts[i] = int(first.sum())
        if counts[i]:
            chi[i] = float(np.sum(first & (sample[:, 1] > q[i, 1]))) / counts[i]
    return ChiCurve(p, chi, counts, sample.shape[0], regime)


def random_scale_marginal_cdf(z, alpha: float) -> np.ndarray:
    """P(Z(s) <= z) = integral over y >= 1 of exp(-y/z) alpha y^(-alpha-1) dy."""
    if not alpha > 0:
        raise DomainError(f"Pareto index must be positive, got {alpha}")
    zs = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty(zs.size)
    for i, zi in enumerate(zs.ravel()):
        if zi <= 0:
            out[i] = 0.0
            continue
        value, _ = integrate.quad(lambda y: math.exp(-y / zi) * alpha * y ** (-alpha - 1.0), 1.0, math.inf)
        out[i] = value
    return out.reshape(np.shape(z)) if np.ndim(z) else out[0]


@dataclass(frozen=True)
class RegimeConfig:
    name: str
    alpha: float
    rule: PairVarioRule
    n: int = 1_000_000
    thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS
    description: str = field(default="", compare=False)


REGIMES = {
    "thm51": RegimeConfig("thm51", 0.5, constant_rule(1.0),
                          description="heavy-tailed independent scale (alpha < 1): asymptotic independence"),
    "thm52": RegimeConfig("thm52", 2.0, constant_rule(1.0),
                          description="light-tailed scale (alpha > 1) with a dependent pair: asymptotic dependence"),
    # chi decays like 1/log u here; it only drops below 0.05 near p = 0.9999
    "thm53": RegimeConfig("thm53", 1.0, power_difference_rule(1.0, 2.0, 2.0), n=10_000_000,
                          thresholds=DEFAULT_THRESHOLDS + (0.9999,),
                          description="standard Pareto scale with gamma growing in |y1 - y2|: asymptotic independence"),
}


@dataclass
class RegimeResult:
    config: RegimeConfig
    curve: ChiCurve
    verdict: str

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "regime": self.config.name,
            "p": self.curve.thresholds,
            "chi_hat": self.curve.chi_hat,
            "n_exceed": self.curve.n_exceed,
            "n": self.curve.n,
            "verdict": self.verdict,
        })


def regime_verdict(curve: ChiCurve) -> str:
    """Classify a chi curve by its top threshold: below half the bottom value and below 0.05, or above 0.05."""
    present = ~np.isnan(curve.chi_hat)
    if not np.any(present):
        return "inconclusive"
    values = curve.chi_hat[present]
    bottom, top = float(values[0]), float(values[-1])
    if top < 0.5 * bottom and top < 0.05:
        return "decreasing-to-zero"
    if top > 0.05:
        return "bounded-away"
    return "inconclusive"


def regime_experiment(
    regime: str,
    config: Optional[RegimeConfig] = None,
    seed: Optional[int] = None,
    n: Optional[int] = None,
    progress: bool = False,
) -> RegimeResult:
    """Simulate a regime, estimate its chi curve and classify the top-threshold behaviour."""
    if config is None:
        if regime not in REGIMES:
            raise ValidationError(f"unknown regime '{regime}', expected one of {sorted(REGIMES)}")
        config = REGIMES[regime]
    size = int(n or config.n)
    min_exceed = int(get_config("REGIME_MIN_EXCEEDANCES", 50))
    max_draws = int(get_config("REGIME_MAX_DRAWS", 10_000_000))
    while True:
        sample = simulate_random_scale(config.alpha, config.rule, size, seed, progress)
        curve = empirical_chi(sample, config.thresholds, config.name)
        if curve.n_exceed[-1] >= min_exceed:
            break
        if size * 2 > max_draws:
            raise InsufficientDataError(
                f"{curve.n_exceed[-1]} exceedances at p={config.thresholds[-1]} even at {size} draws"
            )
        logger.warning("regime_sample_widened", regime=config.name, n=size, exceedances=int(curve.n_exceed[-1]))
        size *= 2
    verdict = regime_verdict(curve)
    logger.info("regime_finished", regime=config.name, n=size, verdict=verdict,
                chi_top=float(curve.chi_hat[-1]))
    return RegimeResult(config, curve, verdict)
