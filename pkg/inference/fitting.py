"""
Staged pairwise-likelihood fitting and TIC model comparison.

Fits share a `nested` dictionary keyed by (family, structure). A model whose
plan starts from a sub-model reuses the sub-model's fit from that dictionary,
fitting it first when absent, so a comparison never fits a structure twice.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from empirical.margins import GevParams, fit_margins, to_unit_frechet
from inference.information import tic
from inference.likelihood import PairwiseObjective
from inference.optimizer import OptimizerSettings, maximize
from inference.plans import StagePlan, default_plan
from models.kernels import embed_params, restrict_params
from pipeline.schemas import BlockMaximaPanel, DependenceSpec, Family, FitReport, MarginState, SiteSet, Structure
from utils.errors import OptimizationError, TICError

logger = structlog.get_logger(__name__)

NestedFits = Dict[Tuple[Family, Structure], FitReport]

NESTING_DEPTH = {
    Structure.ISO: 0,
    Structure.ANISO: 1,
    Structure.M1: 2,
    Structure.MBD: 2,
    Structure.MHG: 2,
    Structure.M2: 3,
    Structure.M3: 4,
}


def _clip_to_bounds(spec: DependenceSpec, params: Dict[str, float]) -> Dict[str, float]:
    out = {}
    for name, value in params.items():
        lo, hi = spec.bounds[name]
        out[name] = min(max(value, lo), hi)
    return out


def isotropic_start(spec: DependenceSpec) -> DependenceSpec:
    """`spec` with only its isotropic part kept: covariate and anisotropy terms reset to their neutral values."""
    if spec.structure is Structure.ISO:
        return spec
    embedded = embed_params(restrict_params(spec, Structure.ISO), spec.structure)
    params = {**embedded.params, **{n: spec.params[n] for n in spec.fixed}}
    return spec.with_params(_clip_to_bounds(spec, params))


def _nested_start(
    spec: DependenceSpec,
    structure: Structure,
    objective: PairwiseObjective,
    settings: Optional[OptimizerSettings],
    nested: NestedFits,
) -> Tuple[DependenceSpec, FitReport]:
    key = (spec.family, structure)
    if key not in nested:
        sub_spec = restrict_params(spec, structure)
        logger.info("fitting_nested_model", model=spec.label, nested=sub_spec.label)
        nested[key] = _fit(objective, sub_spec, None, settings, nested)
    sub = nested[key]
    embedded = embed_params(sub.spec, spec.structure)
    params = {**embedded.params, **{n: spec.params[n] for n in spec.fixed}}
    return spec.with_params(_clip_to_bounds(spec, params)), sub


def _fit(
    objective: PairwiseObjective,
    spec: DependenceSpec,
    plan: Optional[StagePlan],
    settings: Optional[OptimizerSettings],
    nested: NestedFits,
) -> FitReport:
    plan = plan or default_plan(spec)
    plan.validate(spec)
    settings = settings or OptimizerSettings.from_config()

    current = spec
    start_ll = objective(spec)
    trace = []
    if plan.nested_structure is not None:
        candidate, sub = _nested_start(spec, plan.nested_structure, objective, settings, nested)
        trace.append((f"nested:{sub.spec.label}", sub.loglik))
        candidate_ll = objective(candidate)
        if not math.isfinite(start_ll) or candidate_ll >= start_ll:
            current, start_ll = candidate, candidate_ll
    trace.append(("start", start_ll))

    converged = True
    evaluations = 0
    loglik = start_ll
    for stage in plan.stages:
        names = stage.free_names(current)
        if not names:
            continue
        base = current

        def stage_objective(theta: np.ndarray, base=base, names=names) -> float:
            return objective(base.with_params(dict(zip(names, theta))))

        outcome = maximize(stage_objective, base.vector(names), [base.bounds[n] for n in names],
                           settings, label=f"{spec.label}:{stage.label}")
        if outcome.value < outcome.start_value - 1e-9:
            raise OptimizationError(f"stage '{stage.label}' decreased the log-likelihood")
        current = base.with_params(dict(zip(names, outcome.x)))
        loglik = outcome.value
        converged = outcome.converged
        evaluations += outcome.n_evaluations
        trace.append((stage.label, loglik))
        logger.info("stage_finished", model=spec.label, stage=stage.label, loglik=loglik, converged=converged)

    report = FitReport(spec=current, loglik=loglik, converged=converged, stage_trace=trace,
                       free_names=current.free_names, n_evaluations=evaluations)
    nested.setdefault((spec.family, spec.structure), report)
    return report


def fit(
    panel: BlockMaximaPanel,
    sites: SiteSet,
    spec: DependenceSpec,
    plan: Optional[StagePlan] = None,
    settings: Optional[OptimizerSettings] = None,
    nested: Optional[NestedFits] = None,
) -> FitReport:
    """Maximize the pairwise log-likelihood of `spec` on a unit Frechet panel, stage by stage."""
    objective = PairwiseObjective(panel, sites)
    return _fit(objective, spec, plan, settings, {} if nested is None else nested)


def compare(
    panel: BlockMaximaPanel,
    sites: SiteSet,
    specs: Sequence[DependenceSpec],
    settings: Optional[OptimizerSettings] = None,
    allow_pinv: bool = False,
    nested: Optional[NestedFits] = None,
) -> Tuple[pd.DataFrame, Dict[str, FitReport]]:
    """Fit every model (smaller structures first) and tabulate TIC and log-likelihood."""
    objective = PairwiseObjective(panel, sites)
    nested = {} if nested is None else nested
    reports: Dict[str, FitReport] = {}
    for spec in sorted(specs, key=lambda s: NESTING_DEPTH[s.structure]):
        key = (spec.family, spec.structure)
        report = nested[key] if key in nested else _fit(objective, spec, None, settings, nested)
        nested[key] = report
        try:
            tic(panel, sites, report, allow_pinv=allow_pinv)
        except (TICError, OptimizationError) as e:
            logger.warning("tic_failed", model=spec.label, error=str(e))
        reports[spec.label] = report
    rows = [{"model": spec.structure.value, "family": spec.family.value,
             "TIC": reports[spec.label].tic, "loglik": reports[spec.label].loglik,
             "converged": reports[spec.label].converged, "n_params": len(reports[spec.label].free_names)}
            for spec in specs]
    return pd.DataFrame(rows, columns=["model", "family", "TIC", "loglik", "converged", "n_params"]), reports


def fit_margins_and_transform(panel: BlockMaximaPanel) -> Tuple[Dict[str, GevParams], BlockMaximaPanel]:
    """Site-wise GEV margins and the unit Frechet panel; Frechet panels pass through unchanged."""
    if panel.margin_state is MarginState.UNIT_FRECHET:
        return {}, panel
    margins = fit_margins(panel)
    return margins, to_unit_frechet(panel, margins)
