"""Synthetic multi-person scenes with known ground truth, and a grid-search oracle.

Randomness comes from ``numpy.random.Generator(PCG64(seed))``. Draw order per
scene, for each person in turn:

1. demographic label (``choice``)
2. true height (``normal``)
3. true depth (``uniform``; when layered, ``integers`` for the layer, then ``uniform`` jitter)
4. root pixel u, then v (``uniform``)
5. initial-scale factor (``uniform``)
6. height noise (``normal``, only if its sigma is positive)
7. representative-depth noise (``normal``, only if its sigma is positive)
8. body offsets (``uniform``, one per sample)
9. sample relative-depth noise (``normal``, one per sample, only if its sigma is positive)

Person i therefore sees the same draws whatever the person count.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .camera import CameraIntrinsics, ImageSize, unproject
from .depthfit import ScaleBounds
from .errors import DomainError
from .io import Scene
from .metrics import GroundTruthAnnotation, assign_layers
from .priors import ADULT_DEMOGRAPHICS, MINOR_PRIORS, AgeGroup, Gender, HeightPrior, prior_for
from .solver import AffineDepthTransform, PersonObservation, build_coefficients

DEMOGRAPHIC_KEYS = ("Baby", "Kid", "Teen", "Adult/Male", "Adult/Female")


def _default_mix():
    return {"Baby": 0.05, "Kid": 0.1, "Teen": 0.1, "Adult/Male": 0.375, "Adult/Female": 0.375}


@dataclass(frozen=True)
class GenConfig:
    person_count: int = 6
    depth_range: tuple = (2.0, 12.0)
    true_scale: float = 4.0
    true_shift: float = 1.0
    height_noise_sigma: float = 0.0      # meters, on the initial height
    depth_noise_sigma: float = 0.0       # relative-depth units
    demographic_mix: dict = field(default_factory=_default_mix)
    seed: int = 0
    init_scale_range: tuple = (0.7, 0.95)   # per-person factor on the initial depth and height
    prior_mode: str = "true"             # "true": centered on true height; "demographic": label-based
    samples_per_person: int = 64
    body_depth_extent: float = 0.15      # samples span +/- this many meters around the root
    image_size: tuple = (640, 480)
    fov_deg: float = 60.0
    layered: bool = False
    layer_gap: float = 0.6
    layer_jitter: float = 0.05

    def __post_init__(self):
        lo, hi = self.depth_range
        if self.person_count < 1:
            raise DomainError("person_count must be at least 1")
        if not 0.0 < lo < hi:
            raise DomainError(f"depth_range must be positive and ordered, got {self.depth_range}")
        klo, khi = self.init_scale_range
        if not 0.0 < klo <= khi:
            raise DomainError(f"init_scale_range must be positive and ordered, got {self.init_scale_range}")
        if self.true_scale <= 0.0:
            raise DomainError("true_scale must be positive")
        if self.height_noise_sigma < 0.0 or self.depth_noise_sigma < 0.0:
            raise DomainError("noise levels must be non-negative")
        unknown = set(self.demographic_mix) - set(DEMOGRAPHIC_KEYS)
        if unknown:
            raise DomainError(f"unknown demographic keys {sorted(unknown)}")
        if abs(math.fsum(self.demographic_mix.values()) - 1.0) > 1e-9:
            raise DomainError("demographic_mix weights must sum to 1")
        if self.prior_mode not in ("true", "demographic"):
            raise DomainError(f"prior_mode must be 'true' or 'demographic', got {self.prior_mode!r}")
        if self.samples_per_person < 0:
            raise DomainError("samples_per_person must be non-negative")

    @classmethod
    def from_dict(cls, raw: dict) -> "GenConfig":
        raw = dict(raw)
        for key in ("depth_range", "init_scale_range", "image_size"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("depth_range", "init_scale_range", "image_size"):
            out[key] = list(out[key])
        return out


@dataclass(eq=False)
class GroundTruthScene:
    scene: Scene
    true_heights: np.ndarray
    true_depths: np.ndarray
    transform: AffineDepthTransform


def _label(key: str) -> tuple[AgeGroup, Gender]:
    if key.startswith("Adult/"):
        return AgeGroup.ADULT, Gender(key.split("/", 1)[1])
    return AgeGroup(key), Gender.UNKNOWN


def _demographic(group: AgeGroup, gender: Gender) -> HeightPrior:
    return MINOR_PRIORS[group] if group.is_minor else ADULT_DEMOGRAPHICS[gender]


def generate(config: GenConfig, name: str | None = None) -> GroundTruthScene:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    size = ImageSize(*config.image_size)
    cam_spec = {"fov_deg": config.fov_deg}
    cam = CameraIntrinsics.from_fov(math.radians(config.fov_deg), size)
    keys = [k for k in DEMOGRAPHIC_KEYS if config.demographic_mix.get(k, 0.0) > 0.0]
    weights = np.array([config.demographic_mix[k] for k in keys])
    weights = weights / weights.sum()
    lo, hi = config.depth_range
    n_layers = max(1, int((hi - lo) // config.layer_gap) + 1)
    s_true, t_true = config.true_scale, config.true_shift

    persons, explicit, heights, depths = [], set(), [], []
    for i in range(config.person_count):
        group, gender = _label(keys[int(rng.choice(len(keys), p=weights))])
        demo = _demographic(group, gender)
        h_true = float(np.clip(rng.normal(demo.mean, demo.std_dev), 0.5 * demo.mean, 1.5 * demo.mean))
        if config.layered:
            z_true = lo + config.layer_gap * int(rng.integers(n_layers)) + float(
                rng.uniform(-config.layer_jitter, config.layer_jitter))
            z_true = max(z_true, 1e-3)
        else:
            z_true = float(rng.uniform(lo, hi))
        u = float(rng.uniform(0.1 * size.width, 0.9 * size.width))
        v = float(rng.uniform(0.3 * size.height, 0.7 * size.height))
        kappa = float(rng.uniform(*config.init_scale_range))
        h_noise = float(rng.normal(0.0, config.height_noise_sigma)) if config.height_noise_sigma > 0 else 0.0
        d_noise = float(rng.normal(0.0, config.depth_noise_sigma)) if config.depth_noise_sigma > 0 else 0.0

        z0 = kappa * z_true
        h0 = kappa * max(h_true + h_noise, 0.1)
        d = (z_true - t_true) / s_true + d_noise
        n = config.samples_per_person
        offsets = rng.uniform(-config.body_depth_extent, config.body_depth_extent, n)
        rel_noise = (rng.normal(0.0, config.depth_noise_sigma, n) if config.depth_noise_sigma > 0
                     else np.zeros(n))
        samples = np.column_stack([z0 + kappa * offsets, (z_true + offsets - t_true) / s_true + rel_noise])
        x0, y0, _ = unproject((u, v), z0, cam)

        pid = f"p{i}"
        if config.prior_mode == "true":
            prior = HeightPrior(h_true, demo.std_dev)
            explicit.add(pid)
        else:
            prior = prior_for(group, gender, h0)
        persons.append(PersonObservation(pid, h0, z0, d, prior, samples, group, gender, float(x0), float(y0)))
        heights.append(h_true)
        depths.append(z_true)

    layers = assign_layers(depths)
    annotations = {
        p.id: GroundTruthAnnotation(depth_layer=layer, gt_depth=z, gt_height=h, gt_fov=cam.vertical_fov)
        for p, layer, z, h in zip(persons, layers, depths, heights)
    }
    scene = Scene(image=size, camera=cam, persons=persons, name=name or f"scene_{config.seed}",
                  camera_spec=cam_spec, annotations=annotations, explicit_priors=frozenset(explicit))
    return GroundTruthScene(scene, np.array(heights), np.array(depths), AffineDepthTransform(s_true, t_true))


def oracle_box(persons, bounds: ScaleBounds, scale: float, shift: float,
               margin: float = 0.2) -> tuple[tuple, tuple]:
    """Search box (s_range, t_range) centered on a candidate solution.

    The s axis gets ``margin`` relative slack and is then cut to the bounds. The
    t half-width is at least ``margin * |shift|`` and at least the clipped s
    half-width (the unclipped one when the scale is fixed) times sqrt(sum a^2 / sum b^2). That balances cell sizes so the
    objective's narrow valley runs along the cell diagonal, which keeps the grid
    argmin from sliding along the valley.
    """
    c = build_coefficients(persons)
    ms = margin * abs(scale)
    s_lo, s_hi = max(bounds.lower, scale - ms), min(bounds.upper, scale + ms)
    half = (s_hi - s_lo) / 2.0 if s_hi > s_lo else ms   # fixed scale: no valley to balance
    mt = max(margin * abs(shift), half * math.sqrt(float(c.a @ c.a) / float(c.b @ c.b)))
    return (scale - ms, scale + ms), (shift - mt, shift + mt)


def oracle_solve(persons, bounds: ScaleBounds, t_range: tuple, s_range: tuple | None = None,
                 n: int = 2000) -> tuple[float, float, float]:
    """Exhaustive grid minimization of the bounded objective.

    The s axis spans ``s_range`` intersected with the bounds (a single value when
    the bounds coincide); the t axis spans ``t_range``. Both get ``n`` points.
    """
    s_lo, s_hi = bounds.lower, bounds.upper
    if s_range is not None:
        s_lo, s_hi = max(s_lo, s_range[0]), min(s_hi, s_range[1])
    s_grid = np.array([s_lo]) if s_hi <= s_lo else np.linspace(s_lo, s_hi, n)
    t_grid = np.linspace(t_range[0], t_range[1], n)
    S, T = np.meshgrid(s_grid, t_grid, indexing="ij")
    total = np.zeros_like(S)
    for p in persons:
        h = p.initial_height * (S * p.rep_rel_depth + T) / p.initial_depth
        total += ((h - p.prior.mean) / p.prior.std_dev) ** 2
    k = np.unravel_index(np.argmin(total), total.shape)
    return float(S[k]), float(T[k]), float(total[k])


def grid_steps(bounds: ScaleBounds, t_range, s_range=None, n: int = 2000) -> tuple[float, float]:
    """Cell sizes (ds, dt) of the grid :func:`oracle_solve` would use."""
    s_lo, s_hi = bounds.lower, bounds.upper
    if s_range is not None:
        s_lo, s_hi = max(s_lo, s_range[0]), min(s_hi, s_range[1])
    ds = 0.0 if s_hi <= s_lo else (s_hi - s_lo) / (n - 1)
    return ds, (t_range[1] - t_range[0]) / (n - 1)
