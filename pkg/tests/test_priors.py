import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from dto.errors import DomainError
from dto.priors import (ADULT_DEMOGRAPHICS, MINOR_PRIORS, AgeGroup, GaussianComponent, Gender, HeightPrior,
                        adult_prior, fit_single_gaussian, gaussian_log_pdf, minor_prior, prior_for)


@pytest.mark.parametrize("group,mean,sd", [
    (AgeGroup.BABY, 0.801, 0.126),
    (AgeGroup.KID, 1.122, 0.120),
    (AgeGroup.TEEN, 1.477, 0.156),
])
def test_minor_priors(group, mean, sd):
    assert minor_prior(group) == HeightPrior(mean, sd)


def test_minor_prior_rejects_adults():
    with pytest.raises(DomainError):
        minor_prior(AgeGroup.ADULT)


@pytest.mark.parametrize("h,gender,mean,sd", [
    (1.784, Gender.MALE, 1.784, 0.076),
    (1.60, Gender.FEMALE, 1.6235, 0.071),
    (1.90, Gender.MALE, 1.842, 0.076),
])
def test_adult_prior(h, gender, mean, sd):
    p = adult_prior(h, gender)
    assert p.mean == pytest.approx(mean, abs=1e-12)
    assert p.std_dev == sd


def test_adult_prior_rejects_nonpositive_height():
    with pytest.raises(DomainError):
        adult_prior(0.0, Gender.MALE)


def test_unknown_gender_adult_uses_even_mixture():
    p = adult_prior(1.7, Gender.UNKNOWN)
    mix_mean = (1.784 + 1.647) / 2
    mix_var = 0.5 * (0.076**2 + 1.784**2) + 0.5 * (0.071**2 + 1.647**2) - mix_mean**2
    assert p.mean == pytest.approx((1.7 + mix_mean) / 2)
    assert p.std_dev == pytest.approx(math.sqrt(mix_var))


@given(st.sampled_from([Gender.MALE, Gender.FEMALE]))
def test_adult_prior_fixed_point(g):
    demo = ADULT_DEMOGRAPHICS[g]
    assert adult_prior(demo.mean, g).mean == pytest.approx(demo.mean, abs=1e-15)


def test_tabulated_priors_are_sane():
    for p in list(MINOR_PRIORS.values()) + list(ADULT_DEMOGRAPHICS.values()):
        assert p.std_dev > 0 and 0.3 <= p.mean <= 2.5


def test_prior_sanity_bounds():
    with pytest.raises(DomainError):
        HeightPrior(3.0, 0.1)
    with pytest.raises(DomainError):
        HeightPrior(1.7, 0.0)


def test_fit_single_component_identity():
    p = fit_single_gaussian([GaussianComponent(1.0, 0.1, 1.0)])
    assert p.mean == pytest.approx(1.0) and p.std_dev == pytest.approx(0.1)


def test_fit_symmetric_pair():
    p = fit_single_gaussian([GaussianComponent(1.0, 0.1, 0.5), GaussianComponent(1.2, 0.1, 0.5)])
    assert p.mean == pytest.approx(1.1)
    assert p.std_dev == pytest.approx(math.sqrt(0.02))


def test_fit_rejects_bad_weights():
    with pytest.raises(DomainError):
        fit_single_gaussian([GaussianComponent(1.0, 0.1, 0.7)])
    with pytest.raises(DomainError):
        fit_single_gaussian([])


# Illustrative 0-36 month table (0, 3, 6, 9, 12, 18, 24, 30, 36 months), equal weights.
BABY_MONTHLY = [(0.497, 0.019), (0.607, 0.022), (0.667, 0.023), (0.711, 0.024), (0.750, 0.026),
                (0.815, 0.028), (0.871, 0.031), (0.913, 0.033), (0.951, 0.035)]


def test_fit_matches_quadrature_moments():
    comps = [GaussianComponent(m, s, 1 / len(BABY_MONTHLY)) for m, s in BABY_MONTHLY]

    def pdf(x):
        return sum(c.weight * math.exp(-0.5 * ((x - c.mean) / c.std_dev) ** 2) / (c.std_dev * math.sqrt(2 * math.pi))
                   for c in comps)

    pts = [c.mean for c in comps]
    m0 = integrate.quad(pdf, 0.0, 2.0, points=pts, limit=200)[0]
    m1 = integrate.quad(lambda x: x * pdf(x), 0.0, 2.0, points=pts, limit=200)[0]
    m2 = integrate.quad(lambda x: x * x * pdf(x), 0.0, 2.0, points=pts, limit=200)[0]
    mean = m1 / m0
    var = m2 / m0 - mean**2
    fit = fit_single_gaussian(comps)
    assert fit.mean == pytest.approx(mean, rel=1e-6)
    assert fit.std_dev**2 == pytest.approx(var, rel=1e-6)


def test_log_pdf_examples():
    prior = HeightPrior(1.7, 0.07)
    peak = -math.log(0.07 * math.sqrt(2 * math.pi))
    assert gaussian_log_pdf(1.7, prior) == pytest.approx(peak)
    assert gaussian_log_pdf(1.77, prior) == pytest.approx(peak - 0.5)


@given(st.floats(-1, 1))
def test_log_pdf_is_even(delta):
    prior = HeightPrior(1.5, 0.1)
    assert gaussian_log_pdf(1.5 + delta, prior) == pytest.approx(gaussian_log_pdf(1.5 - delta, prior))


def test_prior_for_uses_table_overrides():
    table = {"Kid": HeightPrior(1.0, 0.2), "Adult/Female": HeightPrior(1.6, 0.05)}
    assert prior_for(AgeGroup.KID, Gender.UNKNOWN, 1.1, table) == HeightPrior(1.0, 0.2)
    adult = prior_for(AgeGroup.ADULT, Gender.FEMALE, 1.7, table)
    assert adult.mean == pytest.approx(1.65) and adult.std_dev == 0.05
    assert prior_for(AgeGroup.TEEN, Gender.MALE, 1.5) == MINOR_PRIORS[AgeGroup.TEEN]
    assert np.isclose(prior_for(AgeGroup.ADULT, Gender.MALE, 1.6).mean, 1.692)
