"""
Exact simulation of Brown-Resnick and extremal-t processes at finitely many sites
with the extremal-functions algorithm.

For each anchor site j, Poisson amplitudes zeta = 1/(E_1 + ... + E_m) are
paired with extremal functions Y normalized to Y(s_j) = 1. A function is kept
only if it stays below the running maximum at the earlier anchors, and the
sequence stops once zeta drops below the running maximum at s_j.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import structlog
from scipy import linalg

from models.kernels import build_kernel
from pipeline.schemas import BlockMaximaPanel, DependenceSpec, Family, MarginState, SiteSet
from utils.config_utils import get_config
from utils.errors import SimulationError
from utils.parallel import Seed, parallel_map, spawn_generators

logger = structlog.get_logger(__name__)


class GaussianPairFactory:
    """Dependence matrix of a spec on fixed sites, plus extremal-function draws anchored at any site.

    One Gaussian field is factored for all anchors. Brown-Resnick draws W with
    W(s_0) = 0 and covariance gamma(s, s_0) + gamma(t, s_0) - gamma(s, t), so that
    W - W(s_j) has the increments law needed at every anchor j. Extremal-t draws
    eps with the correlation matrix and uses eps - rho(., s_j) eps_j at anchor j.
    """

    def __init__(self, sites: SiteSet, spec: DependenceSpec):
        self.sites = sites
        self.spec = spec
        self.family = spec.family
        self.nu = spec.params.get("nu")
        matrix = build_kernel(spec).matrix(sites)
        self.matrix = 0.5 * (matrix + matrix.T)
        self.jitter = float(get_config("SIM_JITTER", 0.0))
        self._factor: Optional[np.ndarray] = None
        self._check_validity()

    @property
    def k(self) -> int:
        return self.sites.k

    def _check_validity(self) -> None:
        k = self.k
        tol = float(get_config("VALIDITY_TOL", 1e-8)) * max(1.0, float(np.max(np.abs(self.matrix))))
        if self.family is Family.BROWN_RESNICK:
            centering = np.eye(k) - 1.0 / k
            min_eig = float(linalg.eigvalsh(-0.5 * centering @ self.matrix @ centering)[0])
        else:
            min_eig = float(linalg.eigvalsh(self.matrix)[0])
        if min_eig < -tol:
            logger.warning("dependence_matrix_not_definite", model=self.spec.label, min_eigenvalue=min_eig)

    def _covariance(self) -> np.ndarray:
        """Covariance of the free part of the shared Gaussian field."""
        if self.family is Family.BROWN_RESNICK:
            # W(s_0) = 0, so only sites 1..k-1 are random
            g = self.matrix
            cov = g[1:, 0][:, None] + g[0, 1:][None, :] - g[1:, 1:]
        else:
            cov = self.matrix.copy()
        return cov + self.jitter * np.eye(cov.shape[0])

    def factor(self) -> np.ndarray:
        if self._factor is None:
            cov = self._covariance()
            if cov.size == 0:
                self._factor = cov
            else:
                try:
                    self._factor = linalg.cholesky(0.5 * (cov + cov.T), lower=True)
                except linalg.LinAlgError as e:
                    raise SimulationError(
                        f"Cholesky factorization failed for {self.spec.label} on {self.k} sites; "
                        "add a nugget or set MAXSTABLE_SIM_JITTER"
                    ) from e
        return self._factor

    def prepare(self) -> "GaussianPairFactory":
        """Factorize up front so draws can run on several threads."""
        self.factor()
        return self

    def gaussian_field(self, rng: np.random.Generator) -> np.ndarray:
        """One draw of the shared Gaussian field at every site."""
        chol = self.factor()
        if self.family is Family.BROWN_RESNICK:
            field = np.zeros(self.k)
            if chol.size:
                field[1:] = chol @ rng.standard_normal(self.k - 1)
            return field
        return chol @ rng.standard_normal(self.k)

    def extremal_function(self, j: int, rng: np.random.Generator) -> np.ndarray:
        """One extremal function anchored at site j; its value at s_j is exactly 1."""
        if self.k == 1:
            return np.ones(1)
        field = self.gaussian_field(rng)
        column = self.matrix[:, j]
        if self.family is Family.BROWN_RESNICK:
            out = np.exp(field - field[j] - column)
        else:
            df = self.nu + 1.0
            gauss = (field - column * field[j]) / np.sqrt(df)
            t_draw = column + gauss / np.sqrt(rng.chisquare(df) / df)
            out = np.maximum(t_draw, 0.0) ** self.nu
        out[j] = 1.0
        return out

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One exact realization on the unit Frechet scale."""
        max_arrivals = int(get_config("SIM_MAX_ARRIVALS", 1_000_000))
        z = np.zeros(self.k)
        for j in range(self.k):
            arrivals = rng.exponential()
            zeta = 1.0 / arrivals
            count = 0
            while zeta > z[j]:
                count += 1
                if count > max_arrivals:
                    raise SimulationError(
                        f"more than {max_arrivals} arrivals at anchor {self.sites.ids[j]}; the model is degenerate"
                    )
                y = self.extremal_function(j, rng)
                if j == 0 or np.all(zeta * y[:j] < z[:j]):
                    z = np.maximum(z, zeta * y)
                arrivals += rng.exponential()
                zeta = 1.0 / arrivals
        return z


def simulate_fields(sites: SiteSet, spec: DependenceSpec, n_reps: int, seed: Seed = None) -> np.ndarray:
    """(n_reps, k) exact realizations; replicate r depends only on (seed, r)."""
    if n_reps < 1:
        raise SimulationError("need at least one replicate")
    factory = GaussianPairFactory(sites, spec).prepare()
    rngs = spawn_generators(seed, n_reps)
    draws = parallel_map(factory.draw, rngs)
    logger.info("simulated", model=spec.label, sites=sites.k, reps=n_reps)
    return np.vstack(draws)


def simulate_exact(sites: SiteSet, spec: DependenceSpec, n_reps: int, seed: Seed = None) -> BlockMaximaPanel:
    """A unit Frechet panel of n_reps >= 2 exact realizations."""
    if n_reps < 2:
        raise SimulationError(f"a panel needs at least two replicates, got {n_reps}")
    values = simulate_fields(sites, spec, n_reps, seed)
    return BlockMaximaPanel(values, MarginState.UNIT_FRECHET, None, tuple(range(1, n_reps + 1)), sites.ids)


def simulate_br_pairs(gamma, rng: np.random.Generator) -> np.ndarray:
    """Vectorized exact two-site Brown-Resnick draws, one per entry of `gamma`; returns (n, 2)."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(gamma < 0) or np.any(~np.isfinite(gamma)):
        raise SimulationError("pair variograms must be finite and nonnegative")
    n = gamma.size
    sd = np.sqrt(2.0 * gamma)
    max_arrivals = int(get_config("SIM_MAX_ARRIVALS", 1_000_000))

    # anchor 0: the first arrival always dominates an empty maximum and no later one can
    zeta = 1.0 / rng.exponential(size=n)
    z0 = zeta
    z1 = zeta * np.exp(sd * rng.standard_normal(n) - gamma)

    # anchor 1
    arrivals = rng.exponential(size=n)
    zeta = 1.0 / arrivals
    active = zeta > z1
    count = 0
    while np.any(active):
        count += 1
        if count > max_arrivals:
            raise SimulationError(f"more than {max_arrivals} arrivals in the pair sampler")
        idx = np.flatnonzero(active)
        y0 = np.exp(sd[idx] * rng.standard_normal(idx.size) - gamma[idx])
        accept = zeta[idx] * y0 < z0[idx]
        z1[idx[accept]] = np.maximum(z1[idx[accept]], zeta[idx[accept]])
        arrivals[idx] += rng.exponential(size=idx.size)
        zeta[idx] = 1.0 / arrivals[idx]
        active[idx] = zeta[idx] > z1[idx]
    return np.column_stack([z0, z1])
