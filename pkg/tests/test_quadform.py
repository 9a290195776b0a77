#!/usr/bin/env python3

import logging
import math

import numpy as np
import pytest
from scipy import stats

from ballprob import quadform
from ballprob.configure import InversionConfig
from ballprob.errors import DomainError, NumericalError
from ballprob.spectrum import make_spectrum
from tests.utils.instance_generators import generate_identity_law

log = logging.getLogger("BP.test")
log.setLevel("ERROR")
log.parent.setLevel("ERROR")

SEED = 20240601
ORACLE_TOL = 1e-6
TIGHT = InversionConfig(abs_tol=5e-7)
N_POINTS = 200
N_DRAWS = 10**6


def test_from_gaussian_examples():
    law = quadform.from_gaussian(make_spectrum([1, 1]), [0, 0])
    np.testing.assert_array_equal(law.noncentrality, [0, 0])
    assert law.offset == 0.0

    law = quadform.from_gaussian(make_spectrum([1, 0]), [0, 2])
    assert law.n_weights == 1
    np.testing.assert_array_equal(law.noncentrality, [0])
    assert law.offset == pytest.approx(4.0)

    law = quadform.from_gaussian(make_spectrum([2, 1]), [math.sqrt(2), 1])
    np.testing.assert_allclose(law.noncentrality, [1, 1])
    assert law.offset == 0.0
    assert law.shift_norm_sq == pytest.approx(3.0)

    # entries beyond the spectrum live in zero-variance directions
    law = quadform.from_gaussian(make_spectrum([1]), [0, 3])
    assert law.offset == pytest.approx(9.0)


def test_law_validation():
    with pytest.raises(DomainError):
        quadform.QuadFormLaw(make_spectrum([1, 0]), [0, 0])
    with pytest.raises(DomainError):
        quadform.QuadFormLaw(make_spectrum([1]), [0, 0])
    with pytest.raises(DomainError):
        quadform.QuadFormLaw(make_spectrum([1]), [0], offset=-1.0)


def test_moments():
    law = quadform.from_gaussian(make_spectrum([3, 1]), [math.sqrt(3), 2])
    oracle_mean = 3 * (1 + 1) + 1 * (1 + 4)
    oracle_var = 2 * 9 * (1 + 2) + 2 * 1 * (1 + 8)
    assert law.mean == pytest.approx(oracle_mean)
    assert law.variance == pytest.approx(oracle_var)
    assert law.mean == pytest.approx(3 * stats.ncx2.mean(1, 1) + stats.ncx2.mean(1, 4))


def test_cf_properties():
    law = quadform.from_gaussian(make_spectrum([2, 1, 0.5]), [1, 0, 2])
    assert quadform.cf(law, 0.0) == pytest.approx(1.0)
    t = np.linspace(-5, 5, 41)
    phi = quadform.cf(law, t)
    np.testing.assert_allclose(phi[::-1], np.conj(phi), atol=1e-14)
    assert np.all(np.abs(phi) <= quadform.cf_modulus_bound(law, t) + 1e-15)


def test_cf_matches_chi_square():
    law = generate_identity_law(3)
    t = np.linspace(0, 3, 13)
    np.testing.assert_allclose(quadform.cf(law, t), (1 - 2j * t) ** -1.5, rtol=1e-12)


@pytest.mark.parametrize("dof, lo", [(1, 0.5), (2, 0.05), (3, 0.05)])
def test_cdf_chi_square_oracle(dof, lo):
    law = generate_identity_law(dof)
    xs = np.linspace(lo, 20, N_POINTS)
    np.testing.assert_allclose(quadform.cdf(law, xs, TIGHT), stats.chi2.cdf(xs, dof), atol=ORACLE_TOL)


@pytest.mark.parametrize("dof", [2, 3])
def test_density_chi_square_oracle(dof):
    law = generate_identity_law(dof)
    xs = np.linspace(0.05, 20, N_POINTS)
    np.testing.assert_allclose(quadform.density(law, xs, TIGHT), stats.chi2.pdf(xs, dof), atol=ORACLE_TOL)


def test_exponential_mixture_oracle():
    # 2 chi2_2 is exponential with mean 4
    law = quadform.from_gaussian(make_spectrum([2, 2]))
    xs = np.linspace(0.05, 30, N_POINTS)
    np.testing.assert_allclose(quadform.cdf(law, xs, TIGHT), 1 - np.exp(-xs / 4), atol=ORACLE_TOL)

    # sum of exponentials with means 2 and 6
    law = quadform.from_gaussian(make_spectrum([1, 1, 3, 3]))
    cdf_oracle = 1 - (6 * np.exp(-xs / 6) - 2 * np.exp(-xs / 2)) / 4
    pdf_oracle = (np.exp(-xs / 6) - np.exp(-xs / 2)) / 4
    np.testing.assert_allclose(quadform.cdf(law, xs, TIGHT), cdf_oracle, atol=ORACLE_TOL)
    np.testing.assert_allclose(quadform.density(law, xs, TIGHT), pdf_oracle, atol=ORACLE_TOL)


def test_noncentral_oracle():
    xs = np.linspace(0.5, 25, N_POINTS)
    law = quadform.from_gaussian(make_spectrum([1]), [1])
    np.testing.assert_allclose(quadform.cdf(law, xs, TIGHT), stats.ncx2.cdf(xs, 1, 1), atol=ORACLE_TOL)
    law = quadform.from_gaussian(make_spectrum([1, 1]), [1, 1])
    np.testing.assert_allclose(quadform.cdf(law, xs, TIGHT), stats.ncx2.cdf(xs, 2, 2), atol=ORACLE_TOL)
    np.testing.assert_allclose(quadform.density(law, xs, TIGHT), stats.ncx2.pdf(xs, 2, 2), atol=ORACLE_TOL)


def test_cdf_against_empirical():
    law = quadform.from_gaussian(make_spectrum([3, 1, 0.5]), [0.5, 0, 1])
    draws = np.sort(quadform.sample(law, N_DRAWS, SEED))
    xs = np.linspace(law.offset + 0.1, law.mean + 4 * law.std, 100)
    empirical = np.searchsorted(draws, xs, side="right") / N_DRAWS
    assert np.max(np.abs(empirical - quadform.cdf(law, xs))) < 3e-3
    assert np.mean(draws) == pytest.approx(law.mean, rel=1e-2)


def test_sample_is_seeded():
    law = generate_identity_law(2)
    np.testing.assert_array_equal(quadform.sample(law, 10, SEED), quadform.sample(law, 10, SEED))
    with pytest.raises(DomainError):
        quadform.sample(law, 0, SEED)


def test_point_mass():
    law = quadform.from_gaussian(make_spectrum([0, 0]), [1, 1])
    assert law.n_weights == 0
    assert quadform.cdf(law, 1.9) == 0.0
    assert quadform.cdf(law, 2.0) == 1.0
    assert quadform.quantile(law, 0.3) == 2.0


def test_offset_shifts_support():
    law = quadform.from_gaussian(make_spectrum([1, 1, 0]), [0, 0, 2])
    xs = np.array([1.0, 4.0, 4.5, 6.0])
    np.testing.assert_allclose(
        quadform.cdf(law, xs, TIGHT), np.where(xs > 4, stats.chi2.cdf(xs - 4, 2), 0.0), atol=ORACLE_TOL
    )


def test_density_needs_two_weights():
    with pytest.raises(DomainError):
        quadform.density(generate_identity_law(1), 1.0)


def test_two_weight_density_at_origin():
    law = generate_identity_law(2)
    assert quadform.density(law, 0.0) == pytest.approx(0.5)
    law = quadform.from_gaussian(make_spectrum([4, 1]))
    assert quadform.density(law, 0.0) == pytest.approx(0.25)


def test_strict_inversion_raises():
    cfg = InversionConfig(abs_tol=1e-6, max_terms=10)
    with pytest.raises(NumericalError) as err:
        quadform.cdf(generate_identity_law(1), 1.0, cfg)
    assert err.value.err_est > 1e-6
    values, errors = quadform.cdf_grid(generate_identity_law(1), [1.0], cfg)
    assert errors[0] > 1e-6
    assert 0.0 <= values[0] <= 1.0


def test_error_estimates_within_tolerance():
    law = quadform.from_gaussian(make_spectrum([2, 1, 0.5, 0.25]), [1, 1, 0, 0])
    cfg = InversionConfig.for_law(law)
    xs = np.linspace(0.5, 30, 50)
    _, errors = quadform.cdf_grid(law, xs, cfg)
    assert np.all(errors <= cfg.abs_tol)
    _, errors = quadform.density_grid(law, xs, cfg)
    assert np.all(errors <= cfg.abs_tol)


def test_for_law_tolerance():
    assert InversionConfig.for_law(generate_identity_law(3)).abs_tol == 1e-6
    assert InversionConfig.for_law(generate_identity_law(2)).abs_tol == 1e-5
    assert InversionConfig.for_law(generate_identity_law(2), abs_tol=1e-8).abs_tol == 1e-8


def test_quantile():
    law = generate_identity_law(3)
    assert quadform.quantile(law, 0.95) == pytest.approx(stats.chi2.ppf(0.95, 3), rel=1e-5)
    assert quadform.quantile(law, 0.95) == pytest.approx(7.8147, abs=1e-4)
    for p in [0.01, 0.5, 0.9]:
        assert quadform.cdf(law, quadform.quantile(law, p)) == pytest.approx(p, abs=2e-6)
    for p in [0.0, 1.0, -0.5]:
        with pytest.raises(DomainError):
            quadform.quantile(law, p)


def test_exp_smoothed_density_below_supremum():
    law = quadform.from_gaussian(make_spectrum([2, 1, 0.5]), [1, 0, 0])
    xs = np.linspace(0.05, law.mean + 6 * law.std, 400)
    sup = np.max(quadform.density(law, xs))
    smoothed = quadform.exp_smoothed_density(law, 1.0, xs)
    assert np.all(smoothed <= sup + 1e-5)


def test_exp_smoothed_density_oracle():
    # chi2_2 smoothed with an exponential of mean 2 is chi2_4
    law = generate_identity_law(2)
    xs = np.linspace(0.1, 20, 50)
    np.testing.assert_allclose(quadform.exp_smoothed_density(law, 1.0, xs, TIGHT), stats.chi2.pdf(xs, 4), atol=ORACLE_TOL)


def test_truncate():
    law = quadform.from_gaussian(make_spectrum([1, 0.5, 0.01, 0.001]), [0, 0, 0.1, 0])
    kept, tail = quadform.truncate(law, 2)
    assert kept.n_weights == 2
    assert tail.discarded_trace == pytest.approx(0.011)
    assert tail.discarded_shift_sq == pytest.approx(0.01)
    assert tail(1.0) == pytest.approx(min(1.0, 2 * math.exp(-1 / (2 * 0.011))))
    assert tail.radius(1.0) == pytest.approx(2 * (1 + 0.01))
    # the truncated law stochastically dominates from below
    xs = np.linspace(0.5, 10, 20)
    assert np.all(quadform.cdf(kept, xs) >= quadform.cdf(law, xs) - 2e-6)
    with pytest.raises(DomainError):
        quadform.truncate(law, 0)


def test_evaluate_frame():
    law = generate_identity_law(3)
    df = quadform.evaluate(law, [0.5, 1.0, 2.0])
    assert list(df.columns) == ["x", "cdf", "density", "err_est"]
    np.testing.assert_allclose(df["cdf"], stats.chi2.cdf([0.5, 1.0, 2.0], 3), atol=1e-5)
    df = quadform.evaluate(generate_identity_law(1), [1.0])
    assert df["density"].isna().all()


def test_scaled_law():
    law = generate_identity_law(3).scale(2.0)
    xs = np.linspace(0.5, 20, 20)
    np.testing.assert_allclose(quadform.cdf(law, xs, TIGHT), stats.chi2.cdf(xs / 2, 3), atol=ORACLE_TOL)


def test_permuting_equal_weights_and_flipping_signs():
    s = make_spectrum([1, 1, 0.5])
    xs = [0.5, 1.5, 4.0, 9.0]
    first = quadform.cdf(quadform.from_gaussian(s, [0.7, 0, 0.2]), xs)
    swapped = quadform.cdf(quadform.from_gaussian(s, [0, 0.7, 0.2]), xs)
    flipped = quadform.cdf(quadform.from_gaussian(s, [-0.7, 0, -0.2]), xs)
    np.testing.assert_allclose(swapped, first, atol=1e-12)
    np.testing.assert_array_equal(flipped, first)


def test_density_is_derivative_of_cdf():
    law = quadform.from_gaussian(make_spectrum([2, 1, 0.5]), [1, 0, 0])
    h = 1e-2
    for x in [1.0, 3.0, 6.0]:
        slope = (quadform.cdf(law, x + h) - quadform.cdf(law, x - h)) / (2 * h)
        assert slope == pytest.approx(quadform.density(law, x), abs=2e-4)


def test_cdf_just_above_the_offset():
    law = generate_identity_law(3)
    assert quadform.cdf(law, 5e-324) == pytest.approx(0.0, abs=ORACLE_TOL)
    assert quadform.density(law, 5e-324) == pytest.approx(0.0, abs=ORACLE_TOL)
    assert quadform.cdf(law, 1e-300) == pytest.approx(0.0, abs=ORACLE_TOL)


def test_check_tolerance():
    cfg = InversionConfig(abs_tol=1e-6)
    quadform.check_tolerance(np.array([0.0, 1e-6]), cfg, "cdf")
    with pytest.raises(NumericalError) as err:
        quadform.check_tolerance(np.array([1e-7, 3e-6]), cfg, "density")
    assert err.value.err_est == 3e-6
