import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from risda.numeric import make_rng, psd_project, quadratic_form, sample_gaussian


def double_loop(v, A):
    total = 0.0
    for m in range(len(v)):
        for n in range(len(v)):
            total += v[m] * A[m, n] * v[n]
    return total


def test_quadratic_form_identity():
    assert quadratic_form([1.0, 0.0], np.eye(2)) == 1.0


def test_quadratic_form_zero_vector(rng):
    assert quadratic_form(np.zeros(3), rng.standard_normal((3, 3))) == 0.0


def test_quadratic_form_matches_double_loop(rng):
    for _ in range(20):
        v = rng.standard_normal(4)
        A = rng.standard_normal((4, 4))
        assert quadratic_form(v, A) == pytest.approx(double_loop(v, A), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("v, A", [(np.ones(3), np.eye(2)), (np.ones(2), np.ones((2, 3)))])
def test_quadratic_form_dimension_errors(v, A):
    with pytest.raises(ValueError):
        quadratic_form(v, A)


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=50)
@given(arrays(np.float64, 3, elements=finite), arrays(np.float64, (3, 3), elements=finite))
def test_quadratic_form_ignores_antisymmetric_part(v, A):
    sym = 0.5 * (A + A.T)
    assert quadratic_form(v, A) == pytest.approx(quadratic_form(v, sym), rel=1e-9, abs=1e-9)


def test_sample_gaussian_zero_cov_returns_mean(rng):
    mean = np.array([1.5, -2.0, 0.25])
    assert np.array_equal(sample_gaussian(mean, np.zeros((3, 3)), rng), mean)


def test_sample_gaussian_identity_covariance():
    draws = sample_gaussian(np.zeros(2), np.eye(2), make_rng(0), size=100_000)
    assert np.max(np.abs(np.cov(draws.T) - np.eye(2))) < 0.05


def test_sample_gaussian_deterministic():
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    a = sample_gaussian(np.ones(2), cov, make_rng(7), size=5)
    b = sample_gaussian(np.ones(2), cov, make_rng(7), size=5)
    assert np.array_equal(a, b)


def test_sample_gaussian_scalar_standardises():
    n = 100_000
    mu, sigma = 3.0, 0.5
    x = sample_gaussian([mu], [[sigma**2]], make_rng(3), size=n)[:, 0]
    z = (x - mu) / sigma
    assert abs(z.mean()) < 4 / np.sqrt(n)
    assert abs(z.var() - 1) < 0.05


def test_sample_gaussian_rank_deficient(rng):
    v = rng.standard_normal(4)
    cov = np.outer(v, v)
    draws = sample_gaussian(np.zeros(4), cov, rng, size=200)
    # every draw lies on the line spanned by v
    residual = draws - np.outer(draws @ v / (v @ v), v)
    assert np.max(np.abs(residual)) < 1e-10


def test_sample_gaussian_rejects_asymmetric(rng):
    with pytest.raises(ValueError, match="symmetric"):
        sample_gaussian(np.zeros(2), [[1.0, 0.5], [0.0, 1.0]], rng)


def test_sample_gaussian_rejects_indefinite(rng):
    with pytest.raises(ValueError, match="semi-definite"):
        sample_gaussian(np.zeros(2), [[1.0, 0.0], [0.0, -1.0]], rng)


def test_psd_project_identity_unchanged():
    assert np.array_equal(psd_project(np.eye(3), 0.0), np.eye(3))


def test_psd_project_forced_shift():
    out = psd_project(np.diag([-0.1, 1.0]))
    assert np.allclose(out, np.diag([0.0, 1.1]), atol=1e-15)


def test_psd_project_non_square():
    with pytest.raises(ValueError):
        psd_project(np.ones((2, 3)))


def char_poly_eigs_2x2(A):
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    disc = np.sqrt(max(tr * tr / 4 - det, 0.0))
    return tr / 2 - disc, tr / 2 + disc


@settings(max_examples=100)
@given(arrays(np.float64, (2, 2), elements=finite))
def test_psd_project_nonnegative_spectrum(A):
    S = 0.5 * (A + A.T)
    lo, _ = char_poly_eigs_2x2(psd_project(S))
    assert lo >= -1e-10 * max(1.0, np.abs(S).max())
