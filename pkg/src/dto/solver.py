"""Closed-form solution of the bounded MAP problem over the affine depth transform.

Each person's corrected height is ``h_i = h0_i * (s * d_i + t) / z0_i``; the
objective is the sum of squared standardized deviations of ``h_i`` from the
person's prior, minimized subject to ``lower <= s <= upper``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .depthfit import ScaleBounds, bounds_for_persons
from .errors import DomainError, InfeasibleDepth, SingularSystem
from .priors import AgeGroup, Gender, HeightPrior

DEFAULT_FILTER_THRESHOLD = 1.5
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class PersonObservation:
    id: str
    initial_height: float
    initial_depth: float
    rep_rel_depth: float
    prior: HeightPrior
    samples: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))  # rows of (mesh_depth, rel_depth)
    age_group: AgeGroup = AgeGroup.ADULT
    gender: Gender = Gender.UNKNOWN
    root_x: float = 0.0
    root_y: float = 0.0

    def __post_init__(self):
        if not self.initial_height > 0.0:
            raise DomainError(f"person {self.id}: initial_height must be positive")
        if not self.initial_depth > 0.0:
            raise DomainError(f"person {self.id}: initial_depth must be positive")
        if not math.isfinite(self.rep_rel_depth):
            raise DomainError(f"person {self.id}: rep_rel_depth must be finite")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float).reshape(-1, 2))


@dataclass(frozen=True, eq=False)
class SolverCoefficients:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def normal_matrix(self):
        a, b = self.a, self.b
        return float(a @ a), float(a @ b), float(b @ b)


@dataclass(frozen=True)
class AffineDepthTransform:
    scale: float
    shift: float

    def __call__(self, rel_depth):
        return self.scale * np.asarray(rel_depth, dtype=float) + self.shift


class KktCase(str, Enum):
    INTERIOR = "Interior"
    CLAMPED_LOWER = "ClampedLower"
    CLAMPED_UPPER = "ClampedUpper"
    PLANAR_FIXED_SCALE = "PlanarFixedScale"


@dataclass(frozen=True, eq=False)
class DtoSolution:
    transform: AffineDepthTransform
    kkt_case: KktCase
    bounds: ScaleBounds
    person_ids: tuple
    corrected_depth: np.ndarray
    corrected_height: np.ndarray
    standardized_residual: np.ndarray
    objective_value: float
    mean_residual: float
    threshold: float
    accepted: bool
    infeasible: bool = False

    def to_dict(self) -> dict:
        persons = [
            {"id": pid, "corrected_depth": float(z), "corrected_height": float(h),
             "standardized_residual": float(r)}
            for pid, z, h, r in zip(self.person_ids, self.corrected_depth,
                                    self.corrected_height, self.standardized_residual)
        ]
        return {
            "transform": {"scale": self.transform.scale, "shift": self.transform.shift},
            "kkt_case": self.kkt_case.value,
            "bounds": {
                "x_estimate": self.bounds.x_estimate, "lower": self.bounds.lower,
                "upper": self.bounds.upper, "alpha1": self.bounds.alpha1,
                "alpha2": self.bounds.alpha2, "quasi_planar": self.bounds.quasi_planar,
            },
            "objective_value": self.objective_value,
            "mean_residual": self.mean_residual,
            "threshold": self.threshold,
            "accepted": self.accepted,
            "infeasible": self.infeasible,
            "persons": persons,
        }


def build_coefficients(persons) -> SolverCoefficients:
    persons = list(persons)
    if not persons:
        raise DomainError("need at least one person")
    h = np.array([p.initial_height for p in persons], dtype=float)
    z = np.array([p.initial_depth for p in persons], dtype=float)
    d = np.array([p.rep_rel_depth for p in persons], dtype=float)
    mu = np.array([p.prior.mean for p in persons], dtype=float)
    sigma = np.array([p.prior.std_dev for p in persons], dtype=float)
    if np.any(sigma == 0.0) or np.any(z == 0.0):
        raise DomainError("prior std dev and initial depth must be non-zero")
    b = h / (z * sigma)
    return SolverCoefficients(a=b * d, b=b, c=mu / sigma)


def objective(persons, scale: float, shift: float) -> float:
    """Sum of squared standardized height deviations, without log-pdf constants."""
    total = 0.0
    for p in persons:
        h = p.initial_height * (scale * p.rep_rel_depth + shift) / p.initial_depth
        total += ((h - p.prior.mean) / p.prior.std_dev) ** 2
    return total


def gradient(coeffs: SolverCoefficients, scale: float, shift: float) -> tuple[float, float]:
    r = coeffs.a * scale + coeffs.b * shift - coeffs.c
    return 2.0 * float(coeffs.a @ r), 2.0 * float(coeffs.b @ r)


def solve_unconstrained(coeffs: SolverCoefficients) -> tuple[float, float]:
    saa, sab, sbb = coeffs.normal_matrix
    sac = float(coeffs.a @ coeffs.c)
    sbc = float(coeffs.b @ coeffs.c)
    det = saa * sbb - sab * sab
    if not det >= SINGULAR_RTOL * saa * sbb or det == 0.0:
        raise SingularSystem("normal matrix is singular: all representative depths coincide")
    s = (sac * sbb - sab * sbc) / det
    t = (saa * sbc - sab * sac) / det
    return s, t


def shift_at_scale(coeffs: SolverCoefficients, scale: float) -> float:
    """Optimal shift with the scale held fixed."""
    _, sab, sbb = coeffs.normal_matrix
    return (float(coeffs.b @ coeffs.c) - scale * sab) / sbb


def solve(persons, bounds: ScaleBounds, threshold: float = DEFAULT_FILTER_THRESHOLD) -> DtoSolution:
    persons = list(persons)
    coeffs = build_coefficients(persons)
    if bounds.quasi_planar or bounds.lower == bounds.upper:
        s, case = bounds.clamp(bounds.x_estimate), KktCase.PLANAR_FIXED_SCALE
    else:
        try:
            s_unc, t_unc = solve_unconstrained(coeffs)
        except SingularSystem:
            s, case = bounds.clamp(bounds.x_estimate), KktCase.PLANAR_FIXED_SCALE
        else:
            if s_unc < bounds.lower:
                s, case = bounds.lower, KktCase.CLAMPED_LOWER
            elif s_unc > bounds.upper:
                s, case = bounds.upper, KktCase.CLAMPED_UPPER
            else:
                s, case = s_unc, KktCase.INTERIOR
    t = t_unc if case is KktCase.INTERIOR else shift_at_scale(coeffs, s)
    return _populate(persons, AffineDepthTransform(s, t), case, bounds, threshold)


def _populate(persons, transform, case, bounds, threshold) -> DtoSolution:
    h0 = np.array([p.initial_height for p in persons])
    z0 = np.array([p.initial_depth for p in persons])
    d = np.array([p.rep_rel_depth for p in persons])
    mu = np.array([p.prior.mean for p in persons])
    sigma = np.array([p.prior.std_dev for p in persons])
    z = transform(d)
    h = h0 * z / z0
    resid = np.abs(h - mu) / sigma
    mean_resid = math.fsum(resid) / len(resid)
    infeasible = bool(np.any(z <= 0.0))
    return DtoSolution(
        transform=transform,
        kkt_case=case,
        bounds=bounds,
        person_ids=tuple(p.id for p in persons),
        corrected_depth=z,
        corrected_height=h,
        standardized_residual=resid,
        objective_value=math.fsum(((h - mu) / sigma) ** 2),
        mean_residual=mean_resid,
        threshold=threshold,
        accepted=(not infeasible) and mean_resid <= threshold,
        infeasible=infeasible,
    )


def kkt_multiplier(persons, solution: DtoSolution) -> float:
    """Multiplier of the active bound (0 for interior or fixed-scale solutions)."""
    coeffs = build_coefficients(persons)
    gs, _ = gradient(coeffs, solution.transform.scale, solution.transform.shift)
    if solution.kkt_case is KktCase.CLAMPED_LOWER:
        return gs
    if solution.kkt_case is KktCase.CLAMPED_UPPER:
        return -gs
    return 0.0


def filter_scene(solution: DtoSolution, threshold: float = DEFAULT_FILTER_THRESHOLD) -> bool:
    return float(np.mean(solution.standardized_residual)) <= threshold


def apply_solution(persons, solution: DtoSolution) -> list[PersonObservation]:
    """Move every person along its camera ray to the corrected depth and rescale its height."""
    if solution.infeasible:
        raise InfeasibleDepth("solution places at least one person at non-positive depth")
    out = []
    for p, z, h in zip(persons, solution.corrected_depth, solution.corrected_height):
        ratio = float(z) / p.initial_depth
        out.append(replace(p, initial_depth=float(z), initial_height=float(h),
                           root_x=p.root_x * ratio, root_y=p.root_y * ratio))
    return out


def run_dto(persons, alpha1: float = 1.0, alpha2: float = 5.0,
            threshold: float = DEFAULT_FILTER_THRESHOLD, scale_estimate: float | None = None) -> DtoSolution:
    """Bounds from the persons' own depth samples, then the bounded solve."""
    persons = list(persons)
    bounds = bounds_for_persons(persons, alpha1, alpha2, scale_estimate)
    return solve(persons, bounds, threshold)
