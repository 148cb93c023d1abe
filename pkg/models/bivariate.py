"""
Closed-form bivariate max-stable math for Brown-Resnick and extremal-t pairs.

V is the exponent function on unit Frechet margins, V1/V2 its first partials
and V12 the mixed partial. The pair density is exp(-V) * (V1 * V2 - V12).

Both families satisfy V1 = -F(u1) / z1**2 where F is the standard normal CDF
(Brown-Resnick) or the Student-t CDF with nu + 1 degrees of freedom
(extremal-t); the cross terms of the naive derivative cancel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import special

from pipeline.schemas import Family
from utils.errors import DegenerateError, DomainError, ValidationError

ArrayLike = Union[float, np.ndarray]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class PairDependence:
    """Dependence of one site pair (or an array of pairs sharing a family)."""

    family: Family
    gamma: Optional[ArrayLike] = None
    rho: Optional[ArrayLike] = None
    nu: Optional[float] = None

    def __post_init__(self):
        family = Family.parse(self.family) if not isinstance(self.family, Family) else self.family
        object.__setattr__(self, "family", family)
        if family is Family.BROWN_RESNICK:
            if self.gamma is None:
                raise ValidationError("Brown-Resnick pairs need gamma")
            g = np.asarray(self.gamma, dtype=float)
            if np.any(np.isnan(g)) or np.any(g < 0):
                raise ValidationError("gamma must be nonnegative")
        else:
            if self.rho is None or self.nu is None:
                raise ValidationError("extremal-t pairs need rho and nu")
            r = np.asarray(self.rho, dtype=float)
            if np.any(~np.isfinite(r)) or np.any(np.abs(r) > 1):
                raise ValidationError("rho must lie in [-1, 1]")
            if not self.nu > 0:
                raise ValidationError("nu must be positive")

    @classmethod
    def brown_resnick(cls, gamma: ArrayLike) -> "PairDependence":
        return cls(Family.BROWN_RESNICK, gamma=gamma)

    @classmethod
    def extremal_t(cls, rho: ArrayLike, nu: float) -> "PairDependence":
        return cls(Family.EXTREMAL_T, rho=rho, nu=nu)

    @property
    def degenerate(self) -> np.ndarray:
        """Complete dependence: gamma = 0 or rho = 1."""
        if self.family is Family.BROWN_RESNICK:
            return np.asarray(self.gamma, dtype=float) == 0
        return np.asarray(self.rho, dtype=float) >= 1


def _check_z(z1, z2) -> Tuple[np.ndarray, np.ndarray]:
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if np.any(~(z1 > 0)) or np.any(~(z2 > 0)):
        raise DomainError("exponent functions are defined for strictly positive arguments")
    return z1, z2


def _norm_pdf(x):
    return np.exp(-0.5 * np.square(x) - _LOG_SQRT_2PI)


def _t_pdf(x, df):
    logc = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * np.log(df * np.pi)
    return np.exp(logc - (df + 1) / 2 * np.log1p(np.square(x) / df))


def _br_args(z1, z2, gamma):
    b = np.sqrt(2.0 * gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = b / 2 + np.log(z2 / z1) / b
        v = b / 2 + np.log(z1 / z2) / b
    return b, w, v


def _et_args(z1, z2, rho, nu):
    a = np.sqrt((1.0 - np.square(rho)) / (nu + 1.0))
    r = (z2 / z1) ** (1.0 / nu)
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = np.where(a > 0, (r - rho) / a, np.inf)
        u2 = np.where(a > 0, (1.0 / r - rho) / a, np.inf)
    return a, r, u1, u2


def V_br(z1: ArrayLike, z2: ArrayLike, gamma: ArrayLike) -> np.ndarray:
    """Brown-Resnick exponent function; 1/min(z1, z2) at gamma = 0."""
    z1, z2 = _check_z(z1, z2)
    gamma = np.asarray(gamma, dtype=float)
    b, w, v = _br_args(z1, z2, gamma)
    value = special.ndtr(w) / z1 + special.ndtr(v) / z2
    return np.where(gamma == 0, 1.0 / np.minimum(z1, z2), value)


def V_et(z1: ArrayLike, z2: ArrayLike, rho: ArrayLike, nu: float) -> np.ndarray:
    """Extremal-t exponent function with a = sqrt((1 - rho^2) / (nu + 1)); 1/min(z1, z2) at rho = 1."""
    z1, z2 = _check_z(z1, z2)
    rho = np.asarray(rho, dtype=float)
    _, _, u1, u2 = _et_args(z1, z2, rho, nu)
    value = special.stdtr(nu + 1.0, u1) / z1 + special.stdtr(nu + 1.0, u2) / z2
    return np.where(rho >= 1, 1.0 / np.minimum(z1, z2), value)


def exponent_partials(z1: ArrayLike, z2: ArrayLike, pair: PairDependence) -> Tuple[np.ndarray, ...]:
    """(V, V1, V2, V12) for non-degenerate pairs."""
    z1, z2 = _check_z(z1, z2)
    if np.any(pair.degenerate):
        raise DegenerateError("complete dependence has no smooth exponent function")
    if pair.family is Family.BROWN_RESNICK:
        gamma = np.asarray(pair.gamma, dtype=float)
        b, w, v = _br_args(z1, z2, gamma)
        Fw, Fv = special.ndtr(w), special.ndtr(v)
        V = Fw / z1 + Fv / z2
        V1 = -Fw / z1 ** 2
        V2 = -Fv / z2 ** 2
        V12 = -_norm_pdf(w) / (b * z1 ** 2 * z2)
        return V, V1, V2, V12
    rho = np.asarray(pair.rho, dtype=float)
    nu = float(pair.nu)
    a, r, u1, u2 = _et_args(z1, z2, rho, nu)
    T1, T2 = special.stdtr(nu + 1.0, u1), special.stdtr(nu + 1.0, u2)
    V = T1 / z1 + T2 / z2
    V1 = -T1 / z1 ** 2
    V2 = -T2 / z2 ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        V12 = np.where(a > 0, -_t_pdf(u1, nu + 1.0) * r / (a * nu * z1 ** 2 * z2), 0.0)
    return V, V1, V2, V12


def pair_logdensity(z1: ArrayLike, z2: ArrayLike, pair: PairDependence) -> np.ndarray:
    V, V1, V2, V12 = exponent_partials(z1, z2, pair)
    return -V + np.log(V1 * V2 - V12)


def pair_density(z1: ArrayLike, z2: ArrayLike, pair: PairDependence) -> np.ndarray:
    return np.exp(pair_logdensity(z1, z2, pair))


def theta_br(gamma: ArrayLike) -> np.ndarray:
    """Extremal coefficient 2 * Phi(sqrt(2 gamma) / 2)."""
    return 2.0 * special.ndtr(np.sqrt(np.asarray(gamma, dtype=float) / 2.0))


def theta_et(rho: ArrayLike, nu: float) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        arg = np.sqrt((nu + 1.0) * (1.0 - rho) / (1.0 + rho))
    return 2.0 * special.stdtr(nu + 1.0, arg)


def theta_pair(pair: PairDependence) -> np.ndarray:
    if pair.family is Family.BROWN_RESNICK:
        return theta_br(pair.gamma)
    return theta_et(pair.rho, pair.nu)


def chi_pair(theta: ArrayLike) -> np.ndarray:
    return 2.0 - np.asarray(theta, dtype=float)
