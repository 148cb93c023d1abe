"""Parametric bootstrap: simulate panels from a fitted model, refit each, summarize per parameter."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
import structlog
from tqdm import tqdm

from inference.fitting import fit, isotropic_start
from inference.optimizer import OptimizerSettings
from inference.plans import StagePlan, default_plan
from pipeline.schemas import DependenceSpec, SiteSet
from simulation.exact import simulate_exact
from utils.config_utils import get_config
from utils.errors import BootstrapError, MaxStableError
from utils.parallel import parallel_map, spawn_seeds

logger = structlog.get_logger(__name__)


@dataclass
class BootstrapResult:
    table: pd.DataFrame
    estimates: pd.DataFrame
    n_reps: int
    n_failed: int


def bootstrap(
    spec: DependenceSpec,
    sites: SiteSet,
    n_years: int,
    n_reps: int,
    seed: Optional[int] = None,
    plan: Optional[StagePlan] = None,
    settings: Optional[OptimizerSettings] = None,
    progress: bool = False,
    start: Optional[DependenceSpec] = None,
) -> BootstrapResult:
    """
    Refit `spec` on n_reps panels simulated from it.

    Replicates are refitted with `plan` (the staged default plan of `spec`,
    with its nested warm starts, unless given) from `start`, which defaults to
    the isotropic part of `spec`. Pass `start=spec` to start at the generating
    parameters. Replicates that fail or do not converge are excluded and counted.
    """
    if n_reps < 1:
        raise BootstrapError("need at least one bootstrap replicate")
    if n_years < 2:
        raise BootstrapError(f"simulated panels need at least two years, got {n_years}")
    plan = plan or default_plan(spec)
    start = isotropic_start(spec) if start is None else start
    if start.family is not spec.family or start.structure is not spec.structure:
        raise BootstrapError(f"start model {start.label} does not match {spec.label}")
    names = spec.free_names

    with tqdm(total=n_reps, desc=f"bootstrap {spec.label}", disable=not progress) as bar:
        def replicate(item):
            index, child = item
            try:
                panel = simulate_exact(sites, spec, n_years, seed=child)
                report = fit(panel, sites, start, plan=plan, settings=settings)
                row = report.spec.vector(names) if report.converged else None
                if row is None:
                    logger.warning("bootstrap_replicate_unconverged", replicate=index)
            except MaxStableError as e:
                logger.warning("bootstrap_replicate_failed", replicate=index, error=str(e))
                row = None
            bar.update(1)
            return row

        rows: List[Optional[np.ndarray]] = parallel_map(replicate, list(enumerate(spawn_seeds(seed, n_reps))))

    good = [r for r in rows if r is not None]
    n_failed = n_reps - len(good)
    max_failure = float(get_config("BOOTSTRAP_MAX_FAILURE", 0.5))
    if n_failed > max_failure * n_reps:
        raise BootstrapError(f"{n_failed} of {n_reps} replicates failed to converge")

    estimates = pd.DataFrame(np.array(good).reshape(len(good), len(names)), columns=list(names))
    truth = spec.vector(names)
    table = pd.DataFrame({
        "parameter": list(names),
        "true_value": truth,
        "mean": estimates.mean(axis=0).to_numpy() if len(good) else [math.nan] * len(names),
        "sd": estimates.std(axis=0, ddof=1).to_numpy() if len(good) > 1 else [math.nan] * len(names),
    })
    logger.info("bootstrap_finished", model=spec.label, reps=n_reps, failed=n_failed)
    return BootstrapResult(table=table, estimates=estimates, n_reps=n_reps, n_failed=n_failed)
