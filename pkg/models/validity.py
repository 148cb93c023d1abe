"""
Numerical certification of kernel definiteness.

`check_cnd` certifies that a variogram is conditionally negative definite,
`check_psd` that a correlation function is positive semi-definite, over
random site configurations. Tolerances are relative to the matrix scale.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
import structlog
from scipy import linalg

from models.kernels import Kernel, build_kernel
from pipeline.schemas import DependenceSpec, Family, SiteSet, default_bounds, parameter_names
from utils.config_utils import get_config
from utils.errors import NumericalError, ValidationError
from utils.parallel import parallel_map, spawn_generators

logger = structlog.get_logger(__name__)

SiteGenerator = Callable[[np.random.Generator, int], SiteSet]


@dataclass
class DefinitenessReport:
    """Outcome of a definiteness check; `worst_contrast_value` is NaN for PSD checks."""

    kind: str
    n_trials: int
    min_eigenvalue: float
    worst_contrast_value: float
    passed: bool
    routes_agree: bool = True
    failing_config: Optional[Dict] = None

    def to_dict(self) -> Dict:
        return asdict(self)


def uniform_site_generator(extent_km: float = 300.0, max_altitude_km: float = 1.5) -> SiteGenerator:
    """Sites uniform on [0, extent]^2 km with altitude uniform on [0, max_altitude] km."""
    def generate(rng: np.random.Generator, n_sites: int) -> SiteSet:
        coords = rng.uniform(0.0, extent_km, size=(n_sites, 2))
        alt = rng.uniform(0.0, max_altitude_km, size=(n_sites, 1))
        return SiteSet(coords, alt)
    return generate


def kernel_matrix(kernel: Kernel, sites: SiteSet) -> np.ndarray:
    c, v = sites.coords, sites.covariates
    return np.asarray(kernel(c[:, None, :], c[None, :, :], v[:, None, :], v[None, :, :]), dtype=float)


def _draw(sites: SiteSet, trial: int) -> Dict:
    return {"trial": trial, "coords": sites.coords.tolist(), "covariates": sites.covariates.tolist()}


def _matrix_tol(mat: np.ndarray) -> float:
    scale = float(np.max(np.abs(mat))) if mat.size else 0.0
    return float(get_config("VALIDITY_TOL", 1e-8)) * (scale if scale > 0 else 1.0)


def _cnd_trial(kernel: Kernel, generator: SiteGenerator, n_sites: int, n_contrasts: int, trial: int,
               rng: np.random.Generator) -> Dict:
    sites = generator(rng, n_sites)
    gamma = kernel_matrix(kernel, sites)
    if not np.all(np.isfinite(gamma)):
        raise NumericalError("variogram returned non-finite values", draw=_draw(sites, trial))
    gamma = 0.5 * (gamma + gamma.T)
    tol = _matrix_tol(gamma)
    centering = np.eye(n_sites) - np.full((n_sites, n_sites), 1.0 / n_sites)
    centered = -0.5 * centering @ gamma @ centering
    min_eig = float(linalg.eigvalsh(0.5 * (centered + centered.T))[0])

    # unit zero-sum contrasts, drawn independently of the eigen route
    raw = rng.standard_normal((n_contrasts, n_sites)) @ centering
    norms = np.linalg.norm(raw, axis=1)
    contrasts = raw[norms > 1e-12] / norms[norms > 1e-12, None]
    values = 0.5 * np.einsum("ij,jk,ik->i", contrasts, gamma, contrasts)
    worst = float(values.max()) if values.size else -math.inf

    eig_ok = min_eig >= -tol
    contrast_ok = worst <= tol
    return {"min_eig": min_eig, "worst": worst, "passed": eig_ok and contrast_ok,
            "agree": eig_ok == contrast_ok, "draw": _draw(sites, trial)}


def _psd_trial(kernel: Kernel, generator: SiteGenerator, n_sites: int, trial: int,
               rng: np.random.Generator) -> Dict:
    sites = generator(rng, n_sites)
    corr = kernel_matrix(kernel, sites)
    if not np.all(np.isfinite(corr)):
        raise NumericalError("correlation returned non-finite values", draw=_draw(sites, trial))
    min_eig = float(linalg.eigvalsh(0.5 * (corr + corr.T))[0])
    return {"min_eig": min_eig, "worst": math.nan, "passed": min_eig >= -_matrix_tol(corr),
            "agree": True, "draw": _draw(sites, trial)}


def _summarize(kind: str, results: List[Dict]) -> DefinitenessReport:
    failing = next((r["draw"] for r in results if not r["passed"]), None)
    worst = [r["worst"] for r in results if not math.isnan(r["worst"])]
    report = DefinitenessReport(
        kind=kind,
        n_trials=len(results),
        min_eigenvalue=min(r["min_eig"] for r in results),
        worst_contrast_value=max(worst) if worst else math.nan,
        passed=failing is None,
        routes_agree=all(r["agree"] for r in results),
        failing_config=failing,
    )
    logger.info("definiteness_checked", kind=kind, trials=report.n_trials, passed=report.passed,
                min_eigenvalue=report.min_eigenvalue)
    return report


def check_cnd(
    vario: Kernel,
    site_generator: Optional[SiteGenerator] = None,
    n_sites: int = 8,
    n_trials: int = 200,
    seed: Optional[int] = None,
) -> DefinitenessReport:
    """Conditional negative definiteness over random sites: eigen route on -H G H / 2 plus zero-sum contrasts."""
    if n_sites < 2:
        raise ValidationError("a CND check needs at least two sites")
    generator = site_generator or uniform_site_generator()
    n_contrasts = int(get_config("VALIDITY_CONTRASTS", 32))
    rngs = spawn_generators(seed, n_trials)
    results = parallel_map(
        lambda item: _cnd_trial(vario, generator, n_sites, n_contrasts, item[0], item[1]),
        list(enumerate(rngs)),
    )
    return _summarize("cnd", results)


def check_psd(
    corr: Kernel,
    site_generator: Optional[SiteGenerator] = None,
    n_sites: int = 8,
    n_trials: int = 200,
    seed: Optional[int] = None,
) -> DefinitenessReport:
    """Positive semi-definiteness via the minimum eigenvalue of the correlation matrix."""
    if n_sites < 1:
        raise ValidationError("a PSD check needs at least one site")
    generator = site_generator or uniform_site_generator()
    rngs = spawn_generators(seed, n_trials)
    results = parallel_map(
        lambda item: _psd_trial(corr, generator, n_sites, item[0], item[1]),
        list(enumerate(rngs)),
    )
    return _summarize("psd", results)


def check_spec(spec: DependenceSpec, n_sites: int = 10, n_trials: int = 200,
               seed: Optional[int] = None) -> DefinitenessReport:
    """CND for Brown-Resnick variograms, PSD for extremal-t correlations."""
    kernel = build_kernel(spec)
    if spec.family is Family.BROWN_RESNICK:
        return check_cnd(kernel.fn, n_sites=n_sites, n_trials=n_trials, seed=seed)
    return check_psd(kernel.fn, n_sites=n_sites, n_trials=n_trials, seed=seed)


def random_spec(family: Family, structure, rng: np.random.Generator, unbounded_range: float = 1.0) -> DependenceSpec:
    """Parameters uniform inside the default bounds; unbounded coefficients uniform on [-range, range]."""
    bounds = default_bounds(family, structure)
    params = {}
    for name in parameter_names(family, structure):
        lo, hi = bounds[name]
        lo = max(lo, -unbounded_range) if math.isinf(lo) else lo
        hi = min(hi, unbounded_range) if math.isinf(hi) else hi
        params[name] = float(rng.uniform(lo, hi))
    return DependenceSpec(family, structure, params)
