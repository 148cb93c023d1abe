"""Box-constraint reparametrization for unconstrained Nelder-Mead."""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np
from scipy import special

# Free coordinates are clipped here; the clip edges decode to the exact bound.
Z_CLIP = 30.0
# Fraction of the box used to step off a parameter sitting on its bound
STEP_IN_FRACTION = 0.05


class BoxTransform:
    """
    Coordinate-wise map between a box and R^p.

    logit for finite intervals, log for half-lines, identity for R.
    A degenerate interval (lo == hi) maps to a constant.
    """

    def __init__(self, bounds: Sequence[Tuple[float, float]]):
        self.lo = np.array([b[0] for b in bounds], dtype=float)
        self.hi = np.array([b[1] for b in bounds], dtype=float)
        if np.any(self.lo > self.hi):
            raise ValueError("lower bound above upper bound")
        self.kind = []
        for lo, hi in zip(self.lo, self.hi):
            if lo == hi:
                self.kind.append("fixed")
            elif math.isfinite(lo) and math.isfinite(hi):
                self.kind.append("logit")
            elif math.isfinite(lo):
                self.kind.append("log_lower")
            elif math.isfinite(hi):
                self.kind.append("log_upper")
            else:
                self.kind.append("identity")

    @property
    def size(self) -> int:
        return len(self.kind)

    def to_free(self, theta: Sequence[float]) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        z = np.zeros_like(theta)
        with np.errstate(divide="ignore"):
            for i, kind in enumerate(self.kind):
                t, lo, hi = theta[i], self.lo[i], self.hi[i]
                if kind == "logit":
                    z[i] = special.logit((t - lo) / (hi - lo))
                elif kind == "log_lower":
                    z[i] = np.log(t - lo)
                elif kind == "log_upper":
                    z[i] = -np.log(hi - t)
                elif kind == "identity":
                    z[i] = t
        return np.clip(z, -Z_CLIP, Z_CLIP)

    def from_free(self, z: Sequence[float]) -> np.ndarray:
        z = np.clip(np.asarray(z, dtype=float), -Z_CLIP, Z_CLIP)
        theta = np.empty_like(z)
        for i, kind in enumerate(self.kind):
            lo, hi, zi = self.lo[i], self.hi[i], z[i]
            if kind == "fixed":
                theta[i] = lo
            elif kind == "identity":
                theta[i] = zi
            elif zi <= -Z_CLIP and kind in ("logit", "log_lower"):
                theta[i] = lo
            elif zi >= Z_CLIP and kind in ("logit", "log_upper"):
                theta[i] = hi
            elif kind == "logit":
                theta[i] = lo + (hi - lo) * special.expit(zi)
            elif kind == "log_lower":
                theta[i] = lo + math.exp(zi)
            else:
                theta[i] = hi - math.exp(-zi)
        return np.clip(theta, self.lo, self.hi)

    def step_in(self, i: int, theta_i: float) -> float:
        """Free coordinate of a point stepped STEP_IN_FRACTION into the box from a bound."""
        lo, hi = self.lo[i], self.hi[i]
        width = hi - lo if math.isfinite(hi - lo) else max(1.0, abs(theta_i))
        if theta_i - lo <= hi - theta_i:
            target = theta_i + STEP_IN_FRACTION * width
        else:
            target = theta_i - STEP_IN_FRACTION * width
        single = BoxTransform([(lo, hi)])
        return float(single.to_free([target])[0])
