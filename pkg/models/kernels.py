"""
Variogram and correlation kernels for stationary and non-stationary max-stable models.

All kernels are vectorized: `x`, `y` are coordinate arrays of shape (..., 2) in km
and `cx`, `cy` the aligned covariate rows (..., p). Column 0 of the covariates
is altitude in km, the covariate used by the non-stationary structures.

Brown-Resnick models consume a variogram gamma, extremal-t models a correlation
rho = exp(-gamma) (or the M_HG correlation directly). The nugget is applied last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from pipeline.schemas import DependenceSpec, Family, SiteSet, Structure, default_bounds
from utils.errors import NumericalError, ValidationError

logger = structlog.get_logger(__name__)

Kernel = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

# |alpha/beta| below this uses the analytic log2 limit of the normalized power transform
LOG2_LIMIT_THRESHOLD = 1e-8

COVARIATE_STRUCTURES = frozenset({Structure.M1, Structure.M2, Structure.M3, Structure.MBD, Structure.MHG})


def _diff(x, y) -> np.ndarray:
    return np.asarray(x, dtype=float) - np.asarray(y, dtype=float)


def _norm(h: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.square(h), axis=-1))


def vario_iso(x, y, q: float, alpha0: float) -> np.ndarray:
    """Power variogram (q * |x - y|) ** alpha0."""
    return (q * _norm(_diff(x, y))) ** alpha0


def corr_iso(x, y, q: float, alpha0: float) -> np.ndarray:
    """Powered exponential correlation exp(-(q * |x - y|) ** alpha0)."""
    return np.exp(-vario_iso(x, y, q, alpha0))


@dataclass(frozen=True)
class AnisotropyMatrix2D:
    """A = diag(q1, q2) . R(theta): dilation after rotation by theta."""

    q1: float
    q2: float
    theta: float

    def __post_init__(self):
        if not (self.q1 > 0 and self.q2 > 0):
            raise ValidationError(f"anisotropy scales must be positive, got q1={self.q1}, q2={self.q2}")
        if abs(self.theta) > math.pi / 4 + 1e-12:
            raise ValidationError(f"anisotropy angle {self.theta} outside [-pi/4, pi/4]")

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.diag([self.q1, self.q2]) @ np.array([[c, -s], [s, c]])

    @property
    def determinant(self) -> float:
        return self.q1 * self.q2

    def apply(self, h: np.ndarray) -> np.ndarray:
        return np.asarray(h, dtype=float) @ self.matrix.T


MatrixLike = Union[AnisotropyMatrix2D, np.ndarray, float]


def _apply(A: MatrixLike, h: np.ndarray) -> np.ndarray:
    if isinstance(A, AnisotropyMatrix2D):
        return A.apply(h)
    mat = np.asarray(A, dtype=float)
    if mat.ndim == 0:
        return h * float(mat)
    return h @ mat.T


def vario_aniso(x, y, A: MatrixLike, alpha0: float) -> np.ndarray:
    """Anisotropic power variogram |A (x - y)| ** alpha0."""
    return _norm(_apply(A, _diff(x, y))) ** alpha0


def _warn_overlap(index_sets: Sequence[Sequence[int]]) -> None:
    for (i, a), (j, b) in combinations(enumerate(index_sets), 2):
        shared = set(a) & set(b)
        if shared:
            logger.warning("index_sets_overlap", first=i, second=j, shared=sorted(shared))


def covariate_power_sum(
    x, y, cx, cy,
    A0: MatrixLike,
    alpha0: float,
    scales: Sequence[MatrixLike],
    index_sets: Sequence[Sequence[int]],
    alphas: Sequence[float],
) -> np.ndarray:
    """Inner sum |A0 (x - y)|^alpha0 + sum_j |A_j (c(x)_Ij - c(y)_Ij)|^alpha_j (beta-free)."""
    if not (len(scales) == len(index_sets) == len(alphas)):
        raise ValidationError("scales, index sets and alphas must have equal length")
    _warn_overlap(index_sets)
    g = vario_aniso(x, y, A0, alpha0)
    dc = _diff(cx, cy)
    for scale, idx, alpha_j in zip(scales, index_sets, alphas):
        part = dc[..., list(idx)]
        g = g + _norm(_apply(scale, part)) ** alpha_j
    return g


def vario_prop1(x, y, cx, cy, A0, alpha0, scales, index_sets, alphas, beta: float) -> np.ndarray:
    return covariate_power_sum(x, y, cx, cy, A0, alpha0, scales, index_sets, alphas) ** beta


def normalized_power_transform(g: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """((1 + g^beta)^(alpha/beta) - 1) / (2^(alpha/beta) - 1), log2(1 + g^beta) at alpha/beta = 0."""
    gb = np.asarray(g, dtype=float) ** beta
    ratio = alpha / beta
    if abs(ratio) < LOG2_LIMIT_THRESHOLD:
        return np.log1p(gb) / math.log(2.0)
    return np.expm1(ratio * np.log1p(gb)) / math.expm1(ratio * math.log(2.0))


def vario_prop2(x, y, cx, cy, A0, alpha0, scales, index_sets, alphas, beta: float, alpha: float) -> np.ndarray:
    return normalized_power_transform(covariate_power_sum(x, y, cx, cy, A0, alpha0, scales, index_sets, alphas), alpha, beta)


def _a0(p: Mapping[str, float]) -> AnisotropyMatrix2D:
    return AnisotropyMatrix2D(p["q1"], p["q2"], p["theta"])


def _altitude_inner(x, y, cx, cy, p: Mapping[str, float], alpha0: float, alpha1: float) -> np.ndarray:
    # single covariate (altitude) in its own index set
    return covariate_power_sum(x, y, cx, cy, _a0(p), alpha0, [p["q3"]], [[0]], [alpha1])


def vario_m1(x, y, cx, cy, p: Mapping[str, float]) -> np.ndarray:
    return _altitude_inner(x, y, cx, cy, p, p["alpha0"], p["alpha0"])


def vario_m2(x, y, cx, cy, p: Mapping[str, float]) -> np.ndarray:
    return _altitude_inner(x, y, cx, cy, p, p["alpha0"], p["alpha1"]) ** p["beta"]


def vario_m3(x, y, cx, cy, p: Mapping[str, float]) -> np.ndarray:
    return normalized_power_transform(_altitude_inner(x, y, cx, cy, p, p["alpha0"], p["alpha1"]), p["alpha"], p["beta"])


def vario_mbd(x, y, cx, cy, p: Mapping[str, float]) -> np.ndarray:
    return _altitude_inner(x, y, cx, cy, p, 2.0, 2.0) ** p["beta"]


def hg_scale_matrices(alt: np.ndarray, p: Mapping[str, float]) -> np.ndarray:
    """Omega(s) with log links for omega_x, omega_y and a tanh link for delta; shape (..., 2, 2)."""
    alt = np.asarray(alt, dtype=float)
    wx = np.exp(p["wx_a"] + p["wx_b"] * alt)
    wy = np.exp(p["wy_a"] + p["wy_b"] * alt)
    delta = np.tanh(p["delta_a"] + p["delta_b"] * alt)
    off = delta * wx * wy
    return np.stack([np.stack([wx ** 2, off], axis=-1), np.stack([off, wy ** 2], axis=-1)], axis=-2)


def _det2(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def corr_hg(x, y, cx, cy, p: Mapping[str, float]) -> np.ndarray:
    """Non-stationary powered exponential correlation with locally varying scale matrices."""
    cx = np.asarray(cx, dtype=float)
    cy = np.asarray(cy, dtype=float)
    omega_x = hg_scale_matrices(cx[..., 0], p)
    omega_y = hg_scale_matrices(cy[..., 0], p)
    avg = 0.5 * (omega_x + omega_y)
    det_avg = _det2(avg)
    bad = ~np.isfinite(det_avg) | (det_avg <= 0)
    if np.any(bad):
        raise NumericalError("averaged scale matrix is not invertible", draw=dict(p))
    h = _diff(x, y)
    # h^T avg^-1 h via the explicit 2x2 inverse
    quad = (avg[..., 1, 1] * h[..., 0] ** 2 - 2.0 * avg[..., 0, 1] * h[..., 0] * h[..., 1]
            + avg[..., 0, 0] * h[..., 1] ** 2) / det_avg
    quad = np.maximum(quad, 0.0)
    det_x = np.maximum(_det2(omega_x), 0.0)
    det_y = np.maximum(_det2(omega_y), 0.0)
    prefactor = det_x ** 0.25 * det_y ** 0.25 / np.sqrt(det_avg)
    return prefactor * np.exp(-quad ** (p["alpha0"] / 2.0))


def corr_from_vario(gamma) -> np.ndarray:
    return np.exp(-np.asarray(gamma, dtype=float))


def _same_site(x, y) -> np.ndarray:
    return np.all(np.asarray(x) == np.asarray(y), axis=-1)


def add_nugget_vario(vario: Kernel, nugget: float) -> Kernel:
    """gamma = nugget * 1{x != y} + vario(x, y)."""
    def wrapped(x, y, cx, cy):
        return nugget * (~_same_site(x, y)) + vario(x, y, cx, cy)
    return wrapped


def add_nugget_corr(corr: Kernel, nugget: float) -> Kernel:
    """rho = nugget * 1{x = y} + (1 - nugget) * corr(x, y)."""
    if not 0.0 <= nugget <= 1.0:
        raise ValidationError(f"correlation nugget must lie in [0, 1], got {nugget}")

    def wrapped(x, y, cx, cy):
        return nugget * _same_site(x, y) + (1.0 - nugget) * corr(x, y, cx, cy)
    return wrapped


_VARIOGRAMS: Dict[Structure, Callable[..., np.ndarray]] = {
    Structure.M1: vario_m1,
    Structure.M2: vario_m2,
    Structure.M3: vario_m3,
    Structure.MBD: vario_mbd,
}


def structure_variogram(structure: Structure, p: Mapping[str, float]) -> Kernel:
    """The nugget-free variogram of a structure with its parameters bound."""
    if structure is Structure.ISO:
        return lambda x, y, cx, cy: vario_iso(x, y, p["q"], p["alpha0"])
    if structure is Structure.ANISO:
        A = _a0(p)
        return lambda x, y, cx, cy: vario_aniso(x, y, A, p["alpha0"])
    if structure in _VARIOGRAMS:
        fn = _VARIOGRAMS[structure]
        return lambda x, y, cx, cy: fn(x, y, cx, cy, p)
    raise ValidationError(f"structure {structure.value} has no variogram form")


def structure_correlation(structure: Structure, p: Mapping[str, float]) -> Kernel:
    """The nugget-free correlation of a structure with its parameters bound."""
    if structure is Structure.MHG:
        return lambda x, y, cx, cy: corr_hg(x, y, cx, cy, p)
    vario = structure_variogram(structure, p)
    return lambda x, y, cx, cy: corr_from_vario(vario(x, y, cx, cy))


@dataclass(frozen=True)
class DependenceKernel:
    """Final dependence of a spec: gamma (Brown-Resnick) or rho (extremal-t), nugget included."""

    spec: DependenceSpec
    fn: Kernel

    @property
    def family(self) -> Family:
        return self.spec.family

    @property
    def nu(self) -> Optional[float]:
        return self.spec.params.get("nu")

    def _check_sites(self, sites: SiteSet) -> None:
        if self.spec.structure in COVARIATE_STRUCTURES and sites.n_covariates == 0:
            raise ValidationError(f"{self.spec.label} needs an altitude covariate on every site")

    def between(self, sites: SiteSet, i, j) -> np.ndarray:
        """Values for site index arrays i, j (same shape)."""
        self._check_sites(sites)
        i = np.asarray(i, dtype=int)
        j = np.asarray(j, dtype=int)
        return self.fn(sites.coords[i], sites.coords[j], sites.covariates[i], sites.covariates[j])

    def matrix(self, sites: SiteSet) -> np.ndarray:
        self._check_sites(sites)
        c, v = sites.coords, sites.covariates
        return self.fn(c[:, None, :], c[None, :, :], v[:, None, :], v[None, :, :])


def build_kernel(spec: DependenceSpec) -> DependenceKernel:
    p = dict(spec.params)
    if spec.family is Family.BROWN_RESNICK:
        fn = add_nugget_vario(structure_variogram(spec.structure, p), p["nugget"])
    else:
        fn = add_nugget_corr(structure_correlation(spec.structure, p), p["nugget"])
    return DependenceKernel(spec, fn)


# Nesting: each structure's immediate sub-models, primary warm-start parent first
SUBMODELS: Dict[Structure, Tuple[Structure, ...]] = {
    Structure.ANISO: (Structure.ISO,),
    Structure.M1: (Structure.ANISO,),
    Structure.M2: (Structure.M1, Structure.MBD),
    Structure.M3: (Structure.M2,),
    Structure.MBD: (Structure.ANISO,),
    Structure.MHG: (Structure.ANISO,),
}


def nesting_path(big: Structure, small: Structure) -> Optional[List[Structure]]:
    """Structures from `big` down to `small` through immediate sub-models, or None if not nested."""
    if big is small:
        return [big]
    for sub in SUBMODELS.get(big, ()):
        tail = nesting_path(sub, small)
        if tail is not None:
            return [big] + tail
    return None


def _embed_step(p: Dict[str, float], source: Structure, target: Structure) -> Dict[str, float]:
    if target is Structure.ANISO:
        return {"q1": p["q"], "q2": p["q"], "theta": 0.0, "alpha0": p["alpha0"]}
    if target is Structure.M1:
        return {**p, "q3": 0.0}
    if target is Structure.M2 and source is Structure.MBD:
        return {"q1": p["q1"], "q2": p["q2"], "theta": p["theta"], "alpha0": 2.0,
                "q3": p["q3"], "alpha1": 2.0, "beta": p["beta"]}
    if target is Structure.M2:
        return {**p, "alpha1": p["alpha0"], "beta": 1.0}
    if target is Structure.M3:
        return {**p, "alpha": p["beta"]}
    if target is Structure.MBD:
        lo = default_bounds(Family.BROWN_RESNICK, Structure.MBD)["beta"][0]
        beta = p["alpha0"] / 2.0
        if beta < lo:
            logger.warning("embedding_inexact", target=target.value, beta=beta, clipped_to=lo)
            beta = lo
        return {"q1": p["q1"], "q2": p["q2"], "theta": p["theta"], "q3": 0.0, "beta": beta}
    if target is Structure.MHG:
        A = _a0(p).matrix
        omega = np.linalg.inv(A.T @ A)
        wx, wy = math.sqrt(omega[0, 0]), math.sqrt(omega[1, 1])
        delta = float(np.clip(omega[0, 1] / (wx * wy), -1 + 1e-15, 1 - 1e-15))
        return {"wx_a": math.log(wx), "wx_b": 0.0, "wy_a": math.log(wy), "wy_b": 0.0,
                "delta_a": math.atanh(delta), "delta_b": 0.0, "alpha0": p["alpha0"]}
    raise ValidationError(f"no embedding step from {source.value} into {target.value}")


def embed_params(source: DependenceSpec, target: Structure) -> DependenceSpec:
    """Map a fitted sub-model into `target` at a point defining the same dependence."""
    target = Structure.parse(target) if not isinstance(target, Structure) else target
    path = nesting_path(target, source.structure)
    if path is None:
        raise ValidationError(f"{source.structure.value} is not nested in {target.value}")
    structural = {k: v for k, v in source.params.items() if k not in ("nugget", "nu")}
    for small, big in zip(reversed(path[1:]), reversed(path[:-1])):
        structural = _embed_step(structural, small, big)
    carried = {k: source.params[k] for k in ("nugget", "nu") if k in source.params}
    return DependenceSpec(source.family, target, {**structural, **carried})


def _restrict_step(p: Dict[str, float], source: Structure, target: Structure) -> Dict[str, float]:
    if source is Structure.ANISO:
        return {"q": math.sqrt(p["q1"] * p["q2"]), "alpha0": p["alpha0"]}
    if source is Structure.M2 and target is Structure.MBD:
        return {k: p[k] for k in ("q1", "q2", "theta", "q3", "beta")}
    if source in (Structure.M1, Structure.M2, Structure.M3):
        keep = {Structure.M1: ("q1", "q2", "theta", "alpha0"),
                Structure.M2: ("q1", "q2", "theta", "alpha0", "q3"),
                Structure.M3: ("q1", "q2", "theta", "alpha0", "alpha1", "q3", "beta")}[source]
        return {k: p[k] for k in keep}
    if source is Structure.MBD:
        lo, hi = default_bounds(Family.BROWN_RESNICK, Structure.ANISO)["alpha0"]
        return {"q1": p["q1"], "q2": p["q2"], "theta": p["theta"],
                "alpha0": min(max(2.0 * p["beta"], lo), hi)}
    if source is Structure.MHG:
        lo, hi = default_bounds(Family.EXTREMAL_T, Structure.ANISO)["q1"]
        return {"q1": min(max(math.exp(-p["wx_a"]), lo), hi), "q2": min(max(math.exp(-p["wy_a"]), lo), hi),
                "theta": 0.0, "alpha0": p["alpha0"]}
    raise ValidationError(f"{source.value} has no nested sub-model")


def restrict_params(source: DependenceSpec, target: Structure) -> DependenceSpec:
    """Project a spec onto one of its sub-models; used to seed nested fits."""
    target = Structure.parse(target) if not isinstance(target, Structure) else target
    path = nesting_path(source.structure, target)
    if path is None:
        raise ValidationError(f"{target.value} is not nested in {source.structure.value}")
    structural = {k: v for k, v in source.params.items() if k not in ("nugget", "nu")}
    for big, small in zip(path[:-1], path[1:]):
        structural = _restrict_step(structural, big, small)
    carried = {k: source.params[k] for k in ("nugget", "nu") if k in source.params}
    names = set(structural) | set(carried)
    fixed = frozenset(n for n in source.fixed if n in names)
    return DependenceSpec(source.family, target, {**structural, **carried}, fixed=fixed)
