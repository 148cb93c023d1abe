from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from utils.errors import BoundsError, ValidationError

# In-memory domain model. Every container is frozen and its arrays are
# marked read-only, so instances can be shared across worker threads.


class MarginState(str, Enum):
    RAW = "raw"
    UNIT_FRECHET = "unit_frechet"


class Family(str, Enum):
    BROWN_RESNICK = "BR"
    EXTREMAL_T = "ET"

    @classmethod
    def parse(cls, text: str) -> "Family":
        key = str(text).strip().upper().replace("-", "").replace("_", "")
        aliases = {"BR": cls.BROWN_RESNICK, "BROWNRESNICK": cls.BROWN_RESNICK,
                   "ET": cls.EXTREMAL_T, "EXTREMALT": cls.EXTREMAL_T}
        if key not in aliases:
            raise ValidationError(f"unknown family '{text}'")
        return aliases[key]


class Structure(str, Enum):
    ISO = "iso"
    ANISO = "aniso"
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    MBD = "M_BD"
    MHG = "M_HG"

    @classmethod
    def parse(cls, text: str) -> "Structure":
        key = str(text).strip().upper().replace("_", "")
        aliases = {"ISO": cls.ISO, "ISOTROPIC": cls.ISO, "ANISO": cls.ANISO, "ANISOTROPIC": cls.ANISO,
                   "M1": cls.M1, "M2": cls.M2, "M3": cls.M3, "MBD": cls.MBD, "MHG": cls.MHG}
        if key not in aliases:
            raise ValidationError(f"unknown structure '{text}'")
        return aliases[key]


_SPATIAL = ("q1", "q2", "theta")

STRUCTURE_PARAMETERS: Dict[Structure, Tuple[str, ...]] = {
    Structure.ISO: ("q", "alpha0"),
    Structure.ANISO: _SPATIAL + ("alpha0",),
    Structure.M1: _SPATIAL + ("alpha0", "q3"),
    Structure.M2: _SPATIAL + ("alpha0", "alpha1", "q3", "beta"),
    Structure.M3: _SPATIAL + ("alpha0", "alpha1", "q3", "beta", "alpha"),
    # alpha0 = alpha1 = 2 are part of the structure, not parameters
    Structure.MBD: _SPATIAL + ("q3", "beta"),
    Structure.MHG: ("wx_a", "wx_b", "wy_a", "wy_b", "delta_a", "delta_b", "alpha0"),
}

_COMMON_BOUNDS: Dict[str, Tuple[float, float]] = {
    "q": (1e-5, 5.0),
    "q1": (1e-5, 5.0),
    "q2": (1e-5, 5.0),
    "theta": (-math.pi / 4, math.pi / 4),
    "alpha0": (0.01, 2.0),
    "alpha1": (0.01, 2.0),
    "q3": (0.0, 20.0),
    "beta": (0.01, 1.0),
    "alpha": (-10.0, 1.0),
    "wx_a": (-math.inf, math.inf),
    "wx_b": (-math.inf, math.inf),
    "wy_a": (-math.inf, math.inf),
    "wy_b": (-math.inf, math.inf),
    "delta_a": (-math.inf, math.inf),
    "delta_b": (-math.inf, math.inf),
    "nu": (0.05, 50.0),
}


def parameter_names(family: Family, structure: Structure) -> Tuple[str, ...]:
    """Canonical parameter order: structure parameters, nugget, then nu for extremal-t."""
    if structure is Structure.MHG and family is not Family.EXTREMAL_T:
        raise ValidationError("the M_HG structure is defined for extremal-t processes only")
    names = STRUCTURE_PARAMETERS[structure] + ("nugget",)
    if family is Family.EXTREMAL_T:
        names = names + ("nu",)
    return names


def default_bounds(family: Family, structure: Structure) -> Dict[str, Tuple[float, float]]:
    out: Dict[str, Tuple[float, float]] = {}
    for name in parameter_names(family, structure):
        if name == "nugget":
            # ET nugget mixes correlations and must stay in [0, 1]
            out[name] = (0.0, 1.0) if family is Family.EXTREMAL_T else (0.0, 10.0)
        else:
            out[name] = _COMMON_BOUNDS[name]
    return out


def _frozen_array(values, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 1 and ndim == 2:
        arr = arr.reshape(-1, 1)
    if arr.ndim != ndim:
        raise ValidationError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SiteSet:
    """Station coordinates in km plus aligned covariates (altitude in km)."""

    coords: np.ndarray
    covariates: np.ndarray
    ids: Tuple[str, ...] = ()

    def __post_init__(self):
        coords = _frozen_array(self.coords, 2, "coords")
        covs = np.asarray(self.covariates, dtype=float)
        if covs.size == 0:
            covs = np.zeros((coords.shape[0], 0))
        covs = _frozen_array(covs, 2, "covariates")
        if coords.shape[0] < 1:
            raise ValidationError("a site set needs at least one site")
        if covs.shape[0] != coords.shape[0]:
            raise ValidationError(
                f"{coords.shape[0]} coordinate rows but {covs.shape[0]} covariate rows"
            )
        if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(covs))):
            raise ValidationError("site coordinates and covariates must be finite")
        unique = np.unique(coords, axis=0)
        if unique.shape[0] != coords.shape[0]:
            raise ValidationError("two or more sites share identical coordinates")
        ids = tuple(str(i) for i in self.ids) if self.ids else tuple(f"s{i + 1}" for i in range(coords.shape[0]))
        if len(ids) != coords.shape[0] or len(set(ids)) != len(ids):
            raise ValidationError("site ids must be unique and aligned with coords")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "ids", ids)

    @property
    def k(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def subset(self, indices: Sequence[int]) -> "SiteSet":
        idx = np.asarray(indices, dtype=int)
        return SiteSet(self.coords[idx], self.covariates[idx], tuple(self.ids[i] for i in idx))

    def distances(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt(np.sum(diff ** 2, axis=-1))


@dataclass(frozen=True, eq=False)
class BlockMaximaPanel:
    """n blocks (years) by k sites; missing cells hold NaN and are flagged in `missing`."""

    values: np.ndarray
    margin_state: MarginState = MarginState.RAW
    missing: Optional[np.ndarray] = None
    years: Tuple[int, ...] = ()
    site_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(1, -1)
        if vals.ndim != 2:
            raise ValidationError(f"panel values must be a matrix, got shape {vals.shape}")
        mask = np.isnan(vals)
        if self.missing is not None:
            given = np.asarray(self.missing, dtype=bool)
            if given.shape != vals.shape:
                raise ValidationError("missing mask shape does not match values")
            mask = mask | given
        vals[mask] = np.nan
        n, k = vals.shape
        if n < 2 or k < 1:
            raise ValidationError(f"a panel needs at least two blocks and one site, got shape {vals.shape}")
        if np.any(np.isinf(vals)):
            raise ValidationError("panel values must be finite or missing")
        state = MarginState(self.margin_state)
        if state is MarginState.UNIT_FRECHET and np.any(vals[~mask] <= 0):
            raise ValidationError("unit Frechet panels must be strictly positive")
        years = tuple(int(y) for y in self.years) if self.years else tuple(range(1, n + 1))
        site_ids = tuple(str(s) for s in self.site_ids) if self.site_ids else tuple(f"s{j + 1}" for j in range(k))
        if len(years) != n or len(site_ids) != k:
            raise ValidationError("years/site_ids do not match the panel shape")
        vals.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "missing", mask)
        object.__setattr__(self, "margin_state", state)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "site_ids", site_ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray, margin_state: MarginState) -> "BlockMaximaPanel":
        return BlockMaximaPanel(values, margin_state, self.missing, self.years, self.site_ids)

    def columns(self, indices: Sequence[int]) -> "BlockMaximaPanel":
        idx = np.asarray(indices, dtype=int)
        return BlockMaximaPanel(self.values[:, idx], self.margin_state, self.missing[:, idx],
                                self.years, tuple(self.site_ids[j] for j in idx))

    def rows(self, indices: Sequence[int]) -> "BlockMaximaPanel":
        idx = np.asarray(indices, dtype=int)
        return BlockMaximaPanel(self.values[idx], self.margin_state, self.missing[idx],
                                tuple(self.years[i] for i in idx), self.site_ids)


@dataclass(frozen=True, eq=False)
class DependenceSpec:
    """Model family and structure with a named parameter vector, box bounds and fixed names."""

    family: Family
    structure: Structure
    params: Mapping[str, float]
    bounds: Optional[Mapping[str, Tuple[float, float]]] = None
    fixed: FrozenSet[str] = frozenset()

    def __post_init__(self):
        family = Family.parse(self.family) if not isinstance(self.family, Family) else self.family
        structure = Structure.parse(self.structure) if not isinstance(self.structure, Structure) else self.structure
        names = parameter_names(family, structure)
        params = {k: float(v) for k, v in dict(self.params).items()}
        missing = [n for n in names if n not in params]
        extra = [n for n in params if n not in names]
        if missing or extra:
            raise ValidationError(
                f"{family.value}-{structure.value} expects parameters {list(names)}; "
                f"missing {missing}, unexpected {extra}"
            )
        bounds = default_bounds(family, structure)
        if self.bounds:
            for name, (lo, hi) in dict(self.bounds).items():
                if name not in bounds:
                    raise ValidationError(f"bound given for unknown parameter '{name}'")
                if not lo <= hi:
                    raise ValidationError(f"empty bound interval for '{name}'")
                bounds[name] = (float(lo), float(hi))
        for name in names:
            lo, hi = bounds[name]
            value = params[name]
            if not math.isfinite(value):
                raise BoundsError(f"parameter '{name}' is not finite")
            if not lo <= value <= hi:
                raise BoundsError(f"parameter '{name}'={value} outside [{lo}, {hi}]")
        if family is Family.EXTREMAL_T and params["nu"] <= 0:
            raise BoundsError("extremal-t degrees of freedom must be positive")
        fixed = frozenset(self.fixed)
        unknown = fixed.difference(names)
        if unknown:
            raise ValidationError(f"cannot fix unknown parameters {sorted(unknown)}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "structure", structure)
        object.__setattr__(self, "params", {n: params[n] for n in names})
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "fixed", fixed)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self.params)

    @property
    def free_names(self) -> Tuple[str, ...]:
        return tuple(n for n in self.params if n not in self.fixed)

    @property
    def label(self) -> str:
        return f"{self.family.value}-{self.structure.value}"

    def vector(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        names = self.names if names is None else names
        return np.array([self.params[n] for n in names], dtype=float)

    def with_params(self, updates: Mapping[str, float]) -> "DependenceSpec":
        params = dict(self.params)
        params.update({k: float(v) for k, v in updates.items()})
        return replace(self, params=params)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "structure": self.structure.value,
            "params": dict(self.params),
            "fixed": sorted(self.fixed),
        }


@dataclass
class FitReport:
    """Result of a staged pairwise-likelihood fit; TIC fields are filled by `information.tic`."""

    spec: DependenceSpec
    loglik: float
    converged: bool
    stage_trace: List[Tuple[str, float]] = field(default_factory=list)
    tic: float = float("nan")
    score_cov: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None
    free_names: Tuple[str, ...] = ()
    n_evaluations: int = 0

    @property
    def penalty(self) -> float:
        return self.tic + 2.0 * self.loglik

    def to_dict(self) -> dict:
        return {
            "model": self.spec.label,
            "spec": self.spec.to_dict(),
            "loglik": self.loglik,
            "tic": self.tic,
            "converged": self.converged,
            "stage_trace": [{"stage": s, "loglik": ll} for s, ll in self.stage_trace],
            "free_names": list(self.free_names),
            "n_evaluations": self.n_evaluations,
            "hessian": None if self.hessian is None else self.hessian.tolist(),
            "score_cov": None if self.score_cov is None else self.score_cov.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ChiCurve:
    """Finite-threshold tail dependence estimates chi_hat(p); NaN marks an absent entry."""

    thresholds: np.ndarray
    chi_hat: np.ndarray
    n_exceed: np.ndarray
    n: int
    regime: str = ""

    def __post_init__(self):
        p = _frozen_array(self.thresholds, 1, "thresholds")
        chi = _frozen_array(self.chi_hat, 1, "chi_hat")
        cnt = np.array(self.n_exceed, dtype=int)
        if not (p.shape == chi.shape == cnt.shape):
            raise ValidationError("thresholds, chi_hat and n_exceed must have equal length")
        if np.any((p <= 0) | (p >= 1)) or np.any(np.diff(p) <= 0):
            raise ValidationError("thresholds must be strictly increasing inside (0, 1)")
        present = chi[~np.isnan(chi)]
        if np.any((present < 0) | (present > 1)):
            raise ValidationError("chi estimates must lie in [0, 1]")
        cnt.setflags(write=False)
        object.__setattr__(self, "thresholds", p)
        object.__setattr__(self, "chi_hat", chi)
        object.__setattr__(self, "n_exceed", cnt)
