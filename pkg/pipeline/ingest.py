"""
Ingestion of station block maxima.

Two CSV files describe a study region:
- panel CSV: header `year,<site_id_1>,...,<site_id_k>`, one row per block (year),
  missing cells hold the sentinel `NA`;
- site metadata CSV: header `site_id,lon,lat,alt_m`.

Longitude/latitude are projected to km about the region centroid and the
altitude is converted to km, the covariate used by the non-stationary models.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from pipeline.schemas import BlockMaximaPanel, MarginState, SiteSet
from utils.config_utils import get_config
from utils.errors import IngestError, ProjectionError, ValidationError

logger = structlog.get_logger(__name__)

SITE_COLUMNS = ["site_id", "lon", "lat", "alt_m"]


def project_coordinates(lon_lat: Sequence[Tuple[float, float]], reference: Tuple[float, float]) -> np.ndarray:
    """Local equirectangular projection to km: x = R cos(lat_ref) dlon, y = R dlat."""
    lon0, lat0 = float(reference[0]), float(reference[1])
    if abs(lat0) > 89.0:
        raise ProjectionError(f"reference latitude {lat0} is too close to a pole")
    pts = np.asarray(lon_lat, dtype=float).reshape(-1, 2)
    if np.any(np.abs(pts[:, 1]) >= 90.0):
        raise ProjectionError("latitudes must lie strictly inside (-90, 90)")
    radius = float(get_config("EARTH_RADIUS_KM", 6371.0))
    x = radius * math.cos(math.radians(lat0)) * np.radians(pts[:, 0] - lon0)
    y = radius * np.radians(pts[:, 1] - lat0)
    return np.column_stack([x, y])


def unproject_coordinates(xy: np.ndarray, reference: Tuple[float, float]) -> np.ndarray:
    """Inverse of `project_coordinates` for the same reference point."""
    lon0, lat0 = float(reference[0]), float(reference[1])
    radius = float(get_config("EARTH_RADIUS_KM", 6371.0))
    pts = np.asarray(xy, dtype=float).reshape(-1, 2)
    lon = lon0 + np.degrees(pts[:, 0] / (radius * math.cos(math.radians(lat0))))
    lat = lat0 + np.degrees(pts[:, 1] / radius)
    return np.column_stack([lon, lat])


def _site_sort_key(site_id: str):
    # numeric ids sort numerically, anything else lexicographically after them
    try:
        return (0, float(site_id), site_id)
    except ValueError:
        return (1, 0.0, site_id)


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"non-numeric value '{text}' in column '{column}'", line=line) from None
    if not math.isfinite(value):
        raise IngestError(f"non-finite value '{text}' in column '{column}'", line=line)
    return value


def _read_csv(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise IngestError(f"file not found: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise IngestError(f"{path.name}: {e}") from e


def load_sites(site_meta_path: Path | str, reference: Optional[Tuple[float, float]] = None) -> Tuple[pd.DataFrame, Tuple[float, float]]:
    """Read and validate site metadata; returns the table (lon, lat, alt_km) indexed by site id and the projection reference."""
    frame = _read_csv(Path(site_meta_path))
    if list(frame.columns) != SITE_COLUMNS:
        raise IngestError(f"site metadata header must be {','.join(SITE_COLUMNS)}", line=1)
    rows = []
    for idx, rec in enumerate(frame.itertuples(index=False), start=2):
        site_id = str(rec.site_id).strip()
        if not site_id:
            raise IngestError("empty site_id", line=idx)
        rows.append((site_id, _parse_float(rec.lon, idx, "lon"), _parse_float(rec.lat, idx, "lat"),
                     _parse_float(rec.alt_m, idx, "alt_m") / 1000.0))
    meta = pd.DataFrame(rows, columns=["site_id", "lon", "lat", "alt_km"])
    if meta["site_id"].duplicated().any():
        raise ValidationError(f"duplicate site ids: {sorted(meta.loc[meta['site_id'].duplicated(), 'site_id'])}")
    if meta.empty:
        raise IngestError("site metadata contains no stations")
    if reference is None:
        reference = (float(meta["lon"].mean()), float(meta["lat"].mean()))
    return meta.set_index("site_id"), reference


def load_site_set(site_meta_path: Path | str, reference: Optional[Tuple[float, float]] = None) -> Tuple[SiteSet, Tuple[float, float]]:
    """Stations alone (for simulation targets), ordered by site id."""
    meta, reference = load_sites(site_meta_path, reference)
    ordered = sorted(meta.index, key=_site_sort_key)
    meta = meta.loc[ordered]
    coords = project_coordinates(meta[["lon", "lat"]].to_numpy(), reference)
    return SiteSet(coords, meta[["alt_km"]].to_numpy(), tuple(ordered)), reference


def load_panel(
    csv_path: Path | str,
    site_meta_path: Path | str,
    reference: Optional[Tuple[float, float]] = None,
) -> Tuple[SiteSet, BlockMaximaPanel]:
    """Load a raw block-maxima panel and its stations; rows sorted by year, columns by site id."""
    meta, reference = load_sites(site_meta_path, reference)
    sentinel = str(get_config("MISSING_SENTINEL", "NA"))

    frame = _read_csv(Path(csv_path))
    if not len(frame.columns) or frame.columns[0] != "year":
        raise IngestError("panel header must start with 'year'", line=1)
    site_cols = [str(c).strip() for c in frame.columns[1:]]
    if not site_cols:
        raise IngestError("panel has no site columns", line=1)
    if len(set(site_cols)) != len(site_cols):
        raise IngestError("duplicate site columns in panel header", line=1)
    unknown = [c for c in site_cols if c not in meta.index]
    if unknown:
        raise IngestError(f"panel columns without site metadata: {unknown}", line=1)

    years = []
    values = np.full((len(frame), len(site_cols)), np.nan)
    for row_idx, rec in enumerate(frame.itertuples(index=False, name=None)):
        line = row_idx + 2
        if len(rec) != len(site_cols) + 1:
            raise IngestError("wrong number of fields", line=line)
        try:
            years.append(int(str(rec[0]).strip()))
        except ValueError:
            raise IngestError(f"invalid year '{rec[0]}'", line=line) from None
        for col_idx, cell in enumerate(rec[1:]):
            text = str(cell).strip()
            if text == sentinel:
                continue
            values[row_idx, col_idx] = _parse_float(text, line, site_cols[col_idx])
    if len(set(years)) != len(years):
        raise IngestError("duplicate years in panel")

    row_order = np.argsort(years, kind="stable")
    col_order = sorted(range(len(site_cols)), key=lambda j: _site_sort_key(site_cols[j]))
    ordered_ids = [site_cols[j] for j in col_order]
    values = values[row_order][:, col_order]

    site_meta = meta.loc[ordered_ids]
    coords = project_coordinates(site_meta[["lon", "lat"]].to_numpy(), reference)
    sites = SiteSet(coords, site_meta[["alt_km"]].to_numpy(), tuple(ordered_ids))
    panel = BlockMaximaPanel(values, MarginState.RAW, None, tuple(int(years[i]) for i in row_order), tuple(ordered_ids))
    logger.info("panel_loaded", path=str(csv_path), years=panel.n, sites=panel.k,
                missing=int(panel.missing.sum()))
    return sites, panel


def _fmt(value: float, sentinel: str) -> str:
    return sentinel if math.isnan(value) else repr(float(value))


def write_panel(
    panel: BlockMaximaPanel,
    sites: SiteSet,
    csv_path: Path | str,
    site_meta_path: Path | str,
    reference: Tuple[float, float] = (0.0, 45.0),
) -> None:
    """Write both CSV files; floats use shortest round-trip repr so re-loading is bit-exact."""
    if panel.k != sites.k:
        raise ValidationError("panel and site set disagree on the number of sites")
    sentinel = str(get_config("MISSING_SENTINEL", "NA"))
    header = ["year", *panel.site_ids]
    rows = [[str(year), *(_fmt(v, sentinel) for v in panel.values[i])] for i, year in enumerate(panel.years)]
    pd.DataFrame(rows, columns=header).to_csv(csv_path, index=False)

    lon_lat = unproject_coordinates(sites.coords, reference)
    alt = sites.covariates[:, 0] * 1000.0 if sites.n_covariates else np.zeros(sites.k)
    meta = pd.DataFrame({
        "site_id": list(panel.site_ids),
        "lon": [repr(float(v)) for v in lon_lat[:, 0]],
        "lat": [repr(float(v)) for v in lon_lat[:, 1]],
        "alt_m": [repr(float(v)) for v in alt],
    })
    meta.to_csv(site_meta_path, index=False)
    logger.info("panel_written", path=str(csv_path), years=panel.n, sites=panel.k)
