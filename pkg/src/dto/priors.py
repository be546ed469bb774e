"""Gaussian height priors built from age group and gender labels."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import DomainError


class AgeGroup(str, Enum):
    BABY = "Baby"     # 0-3 years
    KID = "Kid"       # 3-8 years
    TEEN = "Teen"     # 8-15 years
    ADULT = "Adult"   # 15 years and up

    @property
    def is_minor(self) -> bool:
        return self is not AgeGroup.ADULT


class Gender(str, Enum):
    MALE = "Male"
    FEMALE = "Female"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class HeightPrior:
    mean: float
    std_dev: float

    def __post_init__(self):
        if not self.std_dev > 0.0:
            raise DomainError(f"prior std_dev must be positive, got {self.std_dev}")
        if not 0.3 <= self.mean <= 2.5:
            raise DomainError(f"prior mean {self.mean} m is not a plausible human height")


@dataclass(frozen=True)
class GaussianComponent:
    mean: float
    std_dev: float
    weight: float


MINOR_PRIORS = {
    AgeGroup.BABY: HeightPrior(0.801, 0.126),
    AgeGroup.KID: HeightPrior(1.122, 0.120),
    AgeGroup.TEEN: HeightPrior(1.477, 0.156),
}

ADULT_DEMOGRAPHICS = {
    Gender.MALE: HeightPrior(1.784, 0.076),
    Gender.FEMALE: HeightPrior(1.647, 0.071),
}


def fit_single_gaussian(components) -> HeightPrior:
    """Moment-match a Gaussian mixture with a single Gaussian.

    The result carries the exact mean and variance of the mixture.
    """
    components = list(components)
    if not components:
        raise DomainError("need at least one mixture component")
    if any(c.weight <= 0.0 or c.std_dev <= 0.0 for c in components):
        raise DomainError("mixture weights and std devs must be positive")
    total = math.fsum(c.weight for c in components)
    if abs(total - 1.0) > 1e-9:
        raise DomainError(f"mixture weights must sum to 1, got {total!r}")
    mean = math.fsum(c.weight * c.mean for c in components)
    second = math.fsum(c.weight * (c.std_dev ** 2 + c.mean ** 2) for c in components)
    var = second - mean ** 2
    if not var > 0.0:
        raise DomainError(f"fitted variance is not positive ({var!r})")
    return HeightPrior(mean, math.sqrt(var))


def unknown_gender_demographic() -> HeightPrior:
    male, female = ADULT_DEMOGRAPHICS[Gender.MALE], ADULT_DEMOGRAPHICS[Gender.FEMALE]
    return fit_single_gaussian([
        GaussianComponent(male.mean, male.std_dev, 0.5),
        GaussianComponent(female.mean, female.std_dev, 0.5),
    ])


def minor_prior(group: AgeGroup) -> HeightPrior:
    group = AgeGroup(group)
    if not group.is_minor:
        raise DomainError("adults have no fixed prior; use adult_prior")
    return MINOR_PRIORS[group]


def adult_prior(initial_height: float, gender: Gender, demographic: HeightPrior | None = None) -> HeightPrior:
    """Hybrid adult prior: the mean averages the model's height with the demographic mean,
    the spread is the demographic one.

    ``demographic`` overrides the built-in table entry for ``gender``.
    """
    if not initial_height > 0.0:
        raise DomainError(f"initial height must be positive, got {initial_height}")
    if demographic is None:
        gender = Gender(gender)
        demographic = unknown_gender_demographic() if gender is Gender.UNKNOWN else ADULT_DEMOGRAPHICS[gender]
    return HeightPrior((initial_height + demographic.mean) / 2.0, demographic.std_dev)


def prior_for(age_group: AgeGroup, gender: Gender, initial_height: float, table=None) -> HeightPrior:
    """Resolve a person's prior from demographic labels.

    ``table`` optionally maps a key ("Baby", "Kid", "Teen", "Adult/Male",
    "Adult/Female", "Adult/Unknown" or "*") to a fitted HeightPrior.
    """
    age_group, gender = AgeGroup(age_group), Gender(gender)
    custom = None
    if table:
        key = age_group.value if age_group.is_minor else f"Adult/{gender.value}"
        custom = table.get(key, table.get("*"))
    if age_group.is_minor:
        return custom if custom is not None else minor_prior(age_group)
    return adult_prior(initial_height, gender, custom)


def gaussian_log_pdf(x: float, prior: HeightPrior) -> float:
    z = (x - prior.mean) / prior.std_dev
    return -0.5 * z * z - math.log(prior.std_dev * math.sqrt(2.0 * math.pi))
