"""Exact simulation on a regular grid, emitted as a long-format raster table."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy.interpolate import griddata
from scipy.spatial import QhullError

from pipeline.schemas import DependenceSpec, SiteSet
from simulation.exact import simulate_fields
from utils.config_utils import get_config
from utils.errors import ResourceError, ValidationError

logger = structlog.get_logger(__name__)


def interpolate_covariates(stations: SiteSet, nodes: np.ndarray) -> np.ndarray:
    """Linear interpolation of station covariates; nearest station outside the convex hull."""
    if stations.n_covariates == 0:
        return np.zeros((nodes.shape[0], 0))
    out = np.empty((nodes.shape[0], stations.n_covariates))
    for c in range(stations.n_covariates):
        values = stations.covariates[:, c]
        if stations.k >= 3:
            try:
                linear = griddata(stations.coords, values, nodes, method="linear")
            except QhullError as e:
                logger.warning("linear_interpolation_failed", error=str(e))
                linear = np.full(nodes.shape[0], np.nan)
        else:
            linear = np.full(nodes.shape[0], np.nan)
        gaps = np.isnan(linear)
        if np.any(gaps):
            linear[gaps] = griddata(stations.coords, values, nodes[gaps], method="nearest")
        out[:, c] = linear
    return out


def grid_sites(
    region: Tuple[float, float, float, float],
    resolution: Tuple[int, int],
    stations: Optional[SiteSet] = None,
    altitude_km: float = 0.0,
) -> SiteSet:
    """Nodes of an nx-by-ny grid over (xmin, xmax, ymin, ymax), x varying fastest."""
    xmin, xmax, ymin, ymax = (float(v) for v in region)
    nx, ny = (int(v) for v in resolution)
    if nx < 1 or ny < 1 or xmax < xmin or ymax < ymin:
        raise ValidationError("grid needs positive resolution and an ordered region box")
    max_nodes = int(get_config("GRID_MAX_NODES", 10_000))
    if nx * ny > max_nodes:
        raise ResourceError(f"{nx * ny} grid nodes exceed the limit of {max_nodes}")
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    if stations is not None:
        covariates = interpolate_covariates(stations, nodes)
    else:
        covariates = np.full((nodes.shape[0], 1), float(altitude_km))
    ids = tuple(f"g{i}_{j}" for j in range(ny) for i in range(nx))
    return SiteSet(nodes, covariates, ids)


def raster_frame(sites: SiteSet, fields: np.ndarray) -> pd.DataFrame:
    """One row per (replicate, node) for an (n, k) array of realizations."""
    fields = np.atleast_2d(np.asarray(fields, dtype=float))
    n, k = fields.shape
    alt = sites.covariates[:, 0] if sites.n_covariates else np.zeros(k)
    return pd.DataFrame({
        "rep": np.repeat(np.arange(1, n + 1), k),
        "x_km": np.tile(sites.coords[:, 0], n),
        "y_km": np.tile(sites.coords[:, 1], n),
        "altitude_km": np.tile(alt, n),
        "z": fields.ravel(),
    })


def simulate_field_grid(
    region: Tuple[float, float, float, float],
    resolution: Tuple[int, int],
    spec: DependenceSpec,
    seed: Optional[int] = None,
    n_reps: int = 1,
    stations: Optional[SiteSet] = None,
    altitude_km: float = 0.0,
) -> pd.DataFrame:
    """Exact realizations on the grid nodes, one row per (replicate, node)."""
    sites = grid_sites(region, resolution, stations, altitude_km)
    return raster_frame(sites, simulate_fields(sites, spec, n_reps, seed))
