"""Depth evidence per person and the global scale bounds derived from it."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import ImageSize
from .errors import DegenerateSamples, DomainError, EmptySample, NoUsableFits

DEFAULT_ALPHA1 = 1.0
DEFAULT_ALPHA2 = 5.0


@dataclass(frozen=True, eq=False)
class DepthRaster:
    size: ImageSize
    values: np.ndarray  # (height, width), row-major, top-left origin

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.size.height, self.size.width):
            raise DomainError(f"raster shape {v.shape} does not match {self.size.width}x{self.size.height}")
        if not np.all(np.isfinite(v)):
            raise DomainError("raster contains non-finite values")
        object.__setattr__(self, "values", v)

    def lookup(self, pixels) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-pixel lookup. Pixel centers sit on integer coordinates.

        Returns (values, inside) where ``inside`` flags in-bounds pixels; values
        of out-of-bounds pixels are NaN.
        """
        px = np.asarray(pixels, dtype=float).reshape(-1, 2)
        col = np.floor(px[:, 0] + 0.5).astype(np.int64)
        row = np.floor(px[:, 1] + 0.5).astype(np.int64)
        inside = (col >= 0) & (col < self.size.width) & (row >= 0) & (row < self.size.height)
        out = np.full(len(px), np.nan)
        out[inside] = self.values[row[inside], col[inside]]
        return out, inside


@dataclass(frozen=True)
class DepthSamplePair:
    mesh_depth: float
    rel_depth: float


@dataclass(frozen=True)
class IntraHumanFit:
    slope: float
    correlation: float
    sample_count: int


@dataclass(frozen=True)
class ScaleBounds:
    x_estimate: float
    lower: float
    upper: float
    alpha1: float
    alpha2: float
    quasi_planar: bool

    def __post_init__(self):
        if not 0.0 < self.lower <= self.upper:
            raise DomainError(f"invalid scale bounds [{self.lower}, {self.upper}]")

    def clamp(self, s: float) -> float:
        return min(max(s, self.lower), self.upper)


def sample_representative_depth(raster: DepthRaster, pixels, visible=None) -> float:
    """Mean raster value over visible, in-bounds pixels."""
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    vis = np.ones(len(px), dtype=bool) if visible is None else np.asarray(visible, dtype=bool)
    vals, inside = raster.lookup(px)
    keep = inside & vis
    if not keep.any():
        raise EmptySample("no visible pixel falls inside the depth raster")
    return math.fsum(vals[keep]) / int(keep.sum())


def sample_pairs_from_raster(raster: DepthRaster, pixels, mesh_depths, visible=None) -> list[DepthSamplePair]:
    """Pair each visible in-bounds surface point's own depth with the raster value under it."""
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    vis = np.ones(len(px), dtype=bool) if visible is None else np.asarray(visible, dtype=bool)
    vals, inside = raster.lookup(px)
    keep = inside & vis
    z = np.asarray(mesh_depths, dtype=float)
    return [DepthSamplePair(float(m), float(r)) for m, r in zip(z[keep], vals[keep])]


def _as_arrays(samples):
    if isinstance(samples, np.ndarray):
        arr = np.asarray(samples, dtype=float).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]
    mesh = np.array([p.mesh_depth for p in samples], dtype=float)
    rel = np.array([p.rel_depth for p in samples], dtype=float)
    return mesh, rel


def fit_intra_human(samples) -> IntraHumanFit:
    """OLS slope of mesh depth on relative depth, plus the Pearson correlation.

    A person whose mesh depths are all identical gets correlation 0.
    """
    mesh, rel = _as_arrays(samples)
    n = len(mesh)
    if n < 2:
        raise DegenerateSamples(f"need at least 2 samples, got {n}")
    dr = rel - rel.mean()
    dm = mesh - mesh.mean()
    sxx = float(dr @ dr)
    if sxx <= 0.0:
        raise DegenerateSamples("relative depth has zero variance")
    sxy = float(dr @ dm)
    syy = float(dm @ dm)
    slope = sxy / sxx
    corr = 0.0 if syy <= 0.0 else sxy / math.sqrt(sxx * syy)
    return IntraHumanFit(slope, max(-1.0, min(1.0, corr)), n)


def aggregate_scale(fits) -> float:
    """Correlation-weighted mean of per-person slopes; negative weights are clamped to 0."""
    fits = list(fits)
    weights = [max(f.correlation, 0.0) for f in fits]
    wsum = math.fsum(weights)
    if not wsum > 0.0:
        raise NoUsableFits("no person has a positive depth correlation")
    return math.fsum(w * f.slope for w, f in zip(weights, fits)) / wsum


def select_bounds(x: float, inter_depths, intra_variances,
                  alpha1: float = DEFAULT_ALPHA1, alpha2: float = DEFAULT_ALPHA2) -> ScaleBounds:
    """Scale bounds for the solver.

    A scene is quasi-planar when the population variance of the persons' depths
    is below the mean within-person depth variance; the scale is then pinned to
    ``x``. A single person is always quasi-planar.
    """
    if not x > 0.0:
        raise DomainError(f"scale estimate must be positive, got {x}")
    z = np.asarray(inter_depths, dtype=float)
    if z.size == 0:
        raise DomainError("need at least one person")
    intra = np.asarray(intra_variances, dtype=float)
    inter_var = float(np.var(z))
    intra_mean = float(intra.mean()) if intra.size else 0.0
    quasi_planar = z.size == 1 or inter_var < intra_mean
    if quasi_planar:
        alpha1 = alpha2 = 1.0
    if not 0.0 < alpha1 <= alpha2:
        raise DomainError(f"need 0 < alpha1 <= alpha2, got ({alpha1}, {alpha2})")
    return ScaleBounds(x, alpha1 * x, alpha2 * x, alpha1, alpha2, quasi_planar)


def bounds_for_persons(persons, alpha1: float = DEFAULT_ALPHA1, alpha2: float = DEFAULT_ALPHA2,
                       scale_estimate: float | None = None) -> ScaleBounds:
    """Scale bounds from each person's sample pairs and initial depth.

    Persons with degenerate samples are skipped for the slope aggregate.
    ``scale_estimate`` replaces the aggregated slope when given.
    """
    persons = list(persons)
    fits, intra = [], []
    for p in persons:
        samples = np.asarray(p.samples, dtype=float).reshape(-1, 2)
        if len(samples) >= 2:
            intra.append(float(np.var(samples[:, 0])))
        try:
            fits.append(fit_intra_human(samples))
        except DegenerateSamples:
            continue
    x = aggregate_scale(fits) if scale_estimate is None else float(scale_estimate)
    return select_bounds(x, [p.initial_depth for p in persons], intra, alpha1, alpha2)
