"""
Pairwise log-likelihood on unit Frechet panels.

The sum runs over years and ordered site pairs i != j, so every unordered pair
counts twice. A year-pair with a missing member is skipped, as is a pair whose
dependence is complete (gamma = 0 or rho = 1).
"""

from __future__ import annotations

import numpy as np
import structlog

from models.bivariate import PairDependence, pair_logdensity
from models.kernels import build_kernel
from pipeline.schemas import BlockMaximaPanel, DependenceSpec, Family, MarginState, SiteSet
from utils.errors import DomainError, ValidationError

logger = structlog.get_logger(__name__)


class PairwiseObjective:
    """Panel and sites bound once; call with a spec to get the log-likelihood."""

    def __init__(self, panel: BlockMaximaPanel, sites: SiteSet):
        if panel.margin_state is not MarginState.UNIT_FRECHET:
            raise ValidationError("pairwise likelihood needs a unit Frechet panel")
        if panel.k != sites.k:
            raise ValidationError(f"panel has {panel.k} sites but the site set has {sites.k}")
        if panel.k < 2:
            raise ValidationError("pairwise likelihood needs at least two sites")
        observed = panel.values[~panel.missing]
        if np.any(observed <= 0):
            raise DomainError("unit Frechet data must be strictly positive")
        self.panel = panel
        self.sites = sites
        self.i, self.j = np.triu_indices(panel.k, k=1)
        z = panel.values
        self.z1 = z[:, self.i]
        self.z2 = z[:, self.j]
        self.valid = ~(panel.missing[:, self.i] | panel.missing[:, self.j])
        self._warned_degenerate = False

    @property
    def n_pairs(self) -> int:
        return len(self.i)

    def _pair_dependence(self, spec: DependenceSpec, values: np.ndarray) -> PairDependence:
        if spec.family is Family.BROWN_RESNICK:
            return PairDependence.brown_resnick(values)
        return PairDependence.extremal_t(np.clip(values, -1.0, 1.0), spec.params["nu"])

    def pair_terms(self, spec: DependenceSpec) -> np.ndarray:
        """(n_years, n_pairs) log densities of unordered pairs; 0 where skipped."""
        dep = build_kernel(spec).between(self.sites, self.i, self.j)
        degenerate = (dep <= 0) if spec.family is Family.BROWN_RESNICK else (dep >= 1)
        use = self.valid & ~degenerate[None, :]
        if np.any(degenerate) and not self._warned_degenerate:
            logger.warning("degenerate_pairs_skipped", model=spec.label, pairs=int(degenerate.sum()))
            self._warned_degenerate = True
        terms = np.zeros(self.valid.shape)
        if np.any(use):
            per_cell = np.broadcast_to(dep[None, :], use.shape)[use]
            terms[use] = pair_logdensity(self.z1[use], self.z2[use], self._pair_dependence(spec, per_cell))
        return terms

    def by_year(self, spec: DependenceSpec) -> np.ndarray:
        return 2.0 * self.pair_terms(spec).sum(axis=1)

    def __call__(self, spec: DependenceSpec) -> float:
        return float(self.by_year(spec).sum())


def pairwise_loglik(panel: BlockMaximaPanel, sites: SiteSet, spec: DependenceSpec) -> float:
    return PairwiseObjective(panel, sites)(spec)


def pairwise_loglik_by_year(panel: BlockMaximaPanel, sites: SiteSet, spec: DependenceSpec) -> np.ndarray:
    """Per-year contributions; they sum to `pairwise_loglik`."""
    return PairwiseObjective(panel, sites).by_year(spec)
