import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite_e import hermeval

from conftest import closed_form_max_coeffs
from msfilter.models import constant_h_model
from msfilter.spectral import (
    HBAR_OFFSET_CANDIDATES,
    SpectralTable,
    eigen_coefficients,
    gh_nodes,
    gram_matrix,
    half_gh_nodes,
    hermite,
    invariant_mean,
    summability_report,
    u_squared,
    v_squared,
)


def make_table(coeffs, eigenvalues):
    coeffs = np.asarray(coeffs, dtype=float)
    eig = np.asarray(eigenvalues, dtype=float)
    from msfilter.spectral import _v2

    return SpectralTable(theta=0.0, K=len(eig), coeffs=coeffs, eigenvalues=eig, hbar=coeffs[0],
                         hdot=1.0, v2=_v2(coeffs[1:], eig), n_quad=0)


class TestHermite:
    def test_values(self):
        assert hermite(0, 3.7) == 1.0
        assert hermite(2, 1.0) == 0.0
        assert hermite(3, 2.0) == pytest.approx(2.0, abs=1e-14)

    @pytest.mark.parametrize("i", range(12))
    def test_matches_numpy_hermite_e(self, i):
        x = np.linspace(-4, 4, 17)
        coef = np.zeros(i + 1)
        coef[i] = 1
        np.testing.assert_allclose(hermite(i, x), hermeval(x, coef), rtol=1e-12, atol=1e-12)

    def test_negative_index(self):
        with pytest.raises(ValueError):
            hermite(-1, 0.0)


class TestQuadrature:
    def test_gh_moments(self):
        x, w = gh_nodes(40)
        assert abs(w.sum() - 1) < 1e-13
        assert abs((w * x**2).sum() - 1) < 1e-12
        assert abs((w * x**4).sum() - 3) < 1e-11

    @pytest.mark.parametrize("k", range(0, 12))
    def test_half_rule_moments(self, k):
        # E[u^k ; u > 0] = 2^{(k-1)/2} Gamma((k+1)/2) / sqrt(2 pi)
        x, w = half_gh_nodes(64)
        exact = 2 ** ((k - 1) / 2) * math.gamma((k + 1) / 2) / math.sqrt(2 * math.pi)
        assert (w * x**k).sum() == pytest.approx(exact, rel=1e-12)

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            gh_nodes(0)
        with pytest.raises(ValueError):
            half_gh_nodes(0)


class TestEigenCoefficients:
    @pytest.mark.parametrize("theta", [0.5, 1.0, 1.5])
    def test_reference_values(self, ou, theta):
        t = eigen_coefficients(ou, theta, K=20, n_quad=64)
        reference = [theta + 0.3989, 0.5, 0.2821, 0.0, -0.0814, 0.0, 0.0446]
        np.testing.assert_allclose(t.coeffs[:7], reference, atol=5e-4)

    def test_closed_form_oracle(self, ou):
        t = eigen_coefficients(ou, 1.0, K=20, n_quad=64)
        np.testing.assert_allclose(t.coeffs, closed_form_max_coeffs(1.0, 20), atol=1e-12)

    def test_higher_modes_theta_free(self, ou):
        a = eigen_coefficients(ou, 0.3)
        b = eigen_coefficients(ou, 1.7)
        np.testing.assert_allclose(a.coeffs[1:], b.coeffs[1:], atol=1e-12)
        assert b.coeffs[0] - a.coeffs[0] == pytest.approx(1.4, abs=1e-9)

    def test_constant_h(self):
        t = eigen_coefficients(constant_h_model(2.5), 0.8, K=10, n_quad=32)
        assert t.coeffs[0] == pytest.approx(2.5, abs=1e-13)
        np.testing.assert_allclose(t.coeffs[1:], 0.0, atol=1e-12)
        assert t.v2 == pytest.approx(0.0, abs=1e-20)

    def test_hbar_matches_table_not_text(self, ou):
        offset = eigen_coefficients(ou, 1.0).hbar - 1.0
        assert offset == pytest.approx(HBAR_OFFSET_CANDIDATES["1/sqrt(2*pi)"], abs=1e-12)
        assert abs(offset - HBAR_OFFSET_CANDIDATES["1/(2*sqrt(pi))"]) > 0.1

    def test_hdot_is_one(self, ou):
        for theta in (0.2, 1.0, 1.9):
            assert eigen_coefficients(ou, theta).hdot == pytest.approx(1.0, abs=1e-6)

    def test_stable_under_doubling_nodes(self, ou):
        a = eigen_coefficients(ou, 1.0, K=20, n_quad=64)
        b = eigen_coefficients(ou, 1.0, K=20, n_quad=128)
        assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-8

    def test_split_beats_unsplit(self, ou):
        exact = closed_form_max_coeffs(1.0, 20)
        split = eigen_coefficients(ou, 1.0, split=True).coeffs
        plain = eigen_coefficients(ou, 1.0, split=False).coeffs
        assert np.max(np.abs(split - exact)) < np.max(np.abs(plain - exact))

    def test_hbar_equals_c0(self, ou):
        t = eigen_coefficients(ou, 0.7)
        assert t.hbar == t.coeffs[0]
        assert invariant_mean(ou, 0.7) == pytest.approx(t.hbar, abs=1e-15)

    def test_density_fallback_matches_gaussian_path(self, ou):
        import dataclasses

        no_gauss = dataclasses.replace(ou, gaussian_invariant=None)
        a = eigen_coefficients(ou, 1.0, K=6, n_quad=64)
        b = eigen_coefficients(no_gauss, 1.0, K=6, n_quad=64)
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-7)

    def test_missing_density_rejected(self, ou):
        import dataclasses

        bare = dataclasses.replace(ou, gaussian_invariant=None, invariant_density=None)
        with pytest.raises(ValueError):
            eigen_coefficients(bare, 1.0, K=4, n_quad=16)

    def test_preconditions(self, ou):
        with pytest.raises(ValueError):
            eigen_coefficients(ou, 1.0, K=0)
        with pytest.raises(ValueError):
            eigen_coefficients(ou, 1.0, K=20, n_quad=30)


class TestOrthonormality:
    @pytest.mark.parametrize("theta", [0.0, 1.0, 2.0])
    def test_gram_identity(self, ou, theta):
        g = gram_matrix(ou, theta, 10, n_quad=64)
        assert np.max(np.abs(g - np.eye(11))) < 1e-10

    def test_parseval_monotone_and_bounded(self, ou):
        t = eigen_coefficients(ou, 1.0, K=20, n_quad=64)
        partial = np.cumsum(t.coeffs**2)
        assert np.all(np.diff(partial) >= 0)
        # E[max(X, 1)^2] for X ~ N(1, 1): 1 + 2*phi(0) + 1/2
        second_moment = 1.0 + 2.0 / math.sqrt(2 * math.pi) + 0.5
        assert partial[-1] <= second_moment + 1e-12


class TestVariances:
    def test_v2_reference(self, ou):
        t = eigen_coefficients(ou, 1.0, K=20)
        assert t.v2 == pytest.approx(0.04723, abs=2e-4)
        assert v_squared(t) == t.v2

    def test_v2_single_mode(self):
        assert v_squared(make_table([0, 1], [1])) == pytest.approx(0.5)

    def test_v2_four_terms(self):
        # explicit: (c1^2)^2/2 + 2 (c1 c2)^2/3 + (c2^2)^2/4
        c1, c2 = 0.5, 0.2821
        expected = (c1 * c1) ** 2 / 2 + 2 * (c1 * c2) ** 2 / 3 + (c2 * c2) ** 2 / 4
        assert expected == pytest.approx(0.04609, abs=1e-5)
        assert v_squared(make_table([0, c1, c2], [1, 2])) == pytest.approx(expected, rel=1e-12)

    def test_v2_parseval_bound(self, ou):
        t = eigen_coefficients(ou, 1.0, K=20)
        bound = np.sum(t.coeffs[1:] ** 2) ** 2 / (2 * t.eigenvalues[0])
        assert 0 <= t.v2 <= bound

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=2, max_size=8), st.randoms(use_true_random=False))
    def test_v2_permutation_invariant(self, coeffs, rnd):
        lam = [float(i + 1) for i in range(len(coeffs))]
        order = list(range(len(coeffs)))
        rnd.shuffle(order)
        a = v_squared(make_table([0.0] + coeffs, lam))
        b = v_squared(make_table([0.0] + [coeffs[i] for i in order], [lam[i] for i in order]))
        assert a == pytest.approx(b, rel=1e-12, abs=1e-15)

    def test_u2_invariant_start_zero(self, ou):
        t = eigen_coefficients(ou, 1.0, K=20)
        assert u_squared(t, np.zeros(20)) == 0.0

    def test_u2_single_term(self):
        assert u_squared(make_table([0, 1], [1]), [2.0]) == pytest.approx(2.0)

    def test_u2_fixed_start_truncation_stable(self, ou):
        x0 = 1.5
        vals = {}
        for K in (10, 20):
            t = eigen_coefficients(ou, 1.0, K=K, n_quad=64)
            pi0 = [ou.basis(i, 1.0, x0) for i in range(1, K + 1)]
            vals[K] = u_squared(t, pi0)
            # direct double sum as an independent evaluation
            direct = sum(
                t.coeffs[i] * t.coeffs[j] * pi0[i - 1] * pi0[j - 1] / (i + j)
                for i, j in itertools.product(range(1, K + 1), repeat=2)
            )
            assert vals[K] == pytest.approx(direct, rel=1e-12)
        # Slow convergence (the pi0 terms grow like i^(-1/4) at this start): the
        # K=10 -> 20 change is 1.13e-4, and partial sums keep increasing.
        assert vals[20] - vals[10] == pytest.approx(1.1268e-4, rel=1e-3)
        assert vals[20] > vals[10]

    def test_u2_length_checked(self, ou):
        with pytest.raises(ValueError):
            u_squared(eigen_coefficients(ou, 1.0, K=4, n_quad=16), [0.0] * 3)


class TestSummability:
    def test_constant_h_all_zero(self):
        rep = summability_report(eigen_coefficients(constant_h_model(1.0), 1.0, K=10, n_quad=32))
        assert rep.abs_sum_full == pytest.approx(0, abs=1e-11)
        assert rep.double_sum_full == pytest.approx(0, abs=1e-11)

    def test_single_mode_double_sum(self):
        rep = summability_report(make_table([0, 0.7, 0], [2, 3]))
        assert rep.double_sum_full == pytest.approx(2 * 0.49 / 2)

    def test_ou_max_abs_sum_change_matches_closed_form(self, ou):
        # |c_i| decays only like i^(-5/4), so the K=10 -> K=20 change is about 6%.
        rep = summability_report(eigen_coefficients(ou, 1.0, K=20))
        c = np.abs(closed_form_max_coeffs(1.0, 20))
        expected = (c[1:21].sum() - c[1:11].sum()) / c[1:21].sum()
        assert rep.abs_sum_rel_change == pytest.approx(expected, rel=1e-9)
        assert rep.abs_sum_rel_change == pytest.approx(0.0606, abs=1e-3)

    def test_needs_k2(self):
        with pytest.raises(ValueError):
            summability_report(make_table([0, 1], [1]))
