import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fockdiv import (
    ChannelModel,
    ChoiMatrix,
    HermitianMatrix,
    RandomInstance,
    apply_dephasing,
    choi_contraction_apply,
    classical_kl_wrapped_normal,
    dephasing_choi,
    loss_choi,
    loss_dephasing_choi,
    partial_trace_B,
    wrapped_normal_pdf,
)
from fockdiv.errors import InvalidParameterError


def identity_choi_entries(dim):
    j = np.zeros((dim * dim, dim * dim))
    for m in range(dim):
        for n in range(dim):
            j[m * dim + m, n * dim + n] = 1.0
    return j


class TestWrappedNormalPdf:
    def test_uniform_limit(self):
        for phi in (-3.0, 0.0, 1.7):
            assert abs(wrapped_normal_pdf(100.0, phi) - 1.0 / (2 * math.pi)) < 1e-6

    def test_normalization(self):
        phis = np.linspace(-math.pi, math.pi, 1025)
        vals = [wrapped_normal_pdf(0.3, p) for p in phis]
        assert abs(np.trapezoid(vals, phis) - 1.0) < 1e-9

    def test_against_long_series(self):
        # brute-force image sum with a fixed huge window
        gamma, phi = 0.1, 0.0
        ks = np.arange(-10_000, 10_001)
        direct = np.exp(-((phi + 2 * math.pi * ks) ** 2) / (2 * gamma)).sum()
        direct /= math.sqrt(2 * math.pi * gamma)
        assert_allclose(wrapped_normal_pdf(gamma, phi), direct, rtol=0, atol=1e-12)

    def test_rejects_non_positive_gamma(self):
        with pytest.raises(InvalidParameterError):
            wrapped_normal_pdf(0.0, 0.1)


class TestDephasingChoi:
    def test_gamma_zero_is_identity_channel(self):
        j = dephasing_choi(0.0, 3)
        assert_allclose(j.matrix.entries, identity_choi_entries(4))

    def test_full_dephasing_is_diagonal(self):
        j = dephasing_choi(1e6, 3).matrix.entries
        assert_allclose(j, np.diag(np.diag(j)), atol=1e-15)
        assert_allclose(np.diag(j)[[0, 5, 10, 15]], 1.0)

    def test_nearest_neighbour_entry(self):
        j = dephasing_choi(0.1, 2)
        assert_allclose(j.matrix.entries[j.idx.flat(0, 0), j.idx.flat(1, 1)],
                        math.exp(-0.05))

    def test_trace_preserving_exactly(self):
        j = dephasing_choi(0.37, 5)
        marg = partial_trace_B(j.matrix, j.idx).entries
        assert_allclose(marg, np.eye(6), atol=0)

    def test_psd(self):
        for gamma in (0.01, 0.1, 1.0, 5.0):
            w = dephasing_choi(gamma, 6).matrix.eigvalsh()
            assert w[0] > -1e-9


class TestLossChoi:
    def test_lossless_is_identity_channel(self):
        a = loss_choi(1.0, 4).matrix.entries
        assert np.array_equal(a, identity_choi_entries(5))

    def test_complete_loss(self):
        j = loss_choi(0.0, 3)
        expected = np.zeros((16, 16))
        for m in range(4):
            expected[j.idx.flat(m, 0), j.idx.flat(m, 0)] = 1.0
        assert_allclose(j.matrix.entries, expected)

    def test_half_transmission_entries(self):
        j = loss_choi(0.5, 2)
        # (m=1, n=1): photon kept (k=0) and photon lost (k=1) each carry 1/2
        assert_allclose(j.matrix.entries[j.idx.flat(1, 1), j.idx.flat(1, 1)], 0.5)
        assert_allclose(j.matrix.entries[j.idx.flat(1, 0), j.idx.flat(1, 0)], 0.5)

    def test_trace_preserving(self):
        j = loss_choi(0.73, 5)
        assert_allclose(partial_trace_B(j.matrix, j.idx).entries, np.eye(6),
                        atol=1e-12)

    def test_rejects_bad_eta(self):
        with pytest.raises(InvalidParameterError):
            loss_choi(1.2, 3)


class TestLossDephasingChoi:
    def test_gamma_zero_reduces_to_loss(self):
        assert_allclose(loss_dephasing_choi(0.6, 0.0, 4).matrix.entries,
                        loss_choi(0.6, 4).matrix.entries)

    def test_eta_one_reduces_to_dephasing(self):
        assert_allclose(loss_dephasing_choi(1.0, 0.3, 4).matrix.entries,
                        dephasing_choi(0.3, 4).matrix.entries)

    def test_spot_entry_is_product_of_closed_forms(self):
        eta, gamma = 0.95, 0.01
        j = loss_dephasing_choi(eta, gamma, 3)
        # R indices (2, 1), one photon lost from each side: k = 1
        loss_coeff = math.sqrt(2.0) * eta ** 0.5 * (1 - eta)
        expected = loss_coeff * math.exp(-gamma * 1 / 2.0)
        assert_allclose(j.matrix.entries[j.idx.flat(2, 1), j.idx.flat(1, 0)],
                        expected, rtol=1e-12)

    def test_commutes_with_dephasing(self):
        # loss-then-dephase equals dephase-then-loss on random states
        eta, gamma = 0.7, 0.2
        jl = loss_choi(eta, 4)
        for seed in (0, 1, 2):
            rho = RandomInstance(seed, 5).state()
            a = apply_dephasing(gamma, choi_contraction_apply(jl, rho))
            b = choi_contraction_apply(jl, apply_dephasing(gamma, rho))
            assert_allclose(a.entries, b.entries, atol=1e-9)
            c = choi_contraction_apply(loss_dephasing_choi(eta, gamma, 4), rho)
            assert_allclose(a.entries, c.entries, atol=1e-9)


class TestApplyDephasing:
    def test_diagonal_fixed(self):
        rho = HermitianMatrix(np.diag([0.2, 0.3, 0.5]))
        assert_allclose(apply_dephasing(0.8, rho).entries, rho.entries)

    def test_gamma_zero_identity(self):
        rho = RandomInstance(7, 4).state()
        assert_allclose(apply_dephasing(0.0, rho).entries, rho.entries)

    def test_trace_preserved(self):
        rho = RandomInstance(8, 5).state()
        assert abs(apply_dephasing(0.4, rho).trace() - rho.trace()) < 1e-12

    def test_matches_choi_contraction(self):
        gamma = 0.25
        j = dephasing_choi(gamma, 4)
        for seed in (11, 12):
            rho = RandomInstance(seed, 5).state()
            via_choi = choi_contraction_apply(j, rho)
            assert_allclose(via_choi.entries, apply_dephasing(gamma, rho).entries,
                            atol=1e-10)


class TestClassicalKl:
    def test_identical_densities(self):
        assert classical_kl_wrapped_normal(0.3, 0.3) == 0.0

    def test_reference_pair(self):
        # for these variances the wrap correction is far below the tolerance,
        # so the value coincides with the Gaussian KL (ln 2 - 3/8)
        assert_allclose(classical_kl_wrapped_normal(0.1, 0.4),
                        0.3181471805599453, atol=1e-8)

    def test_against_trapezoid_oracle(self):
        g1, g2 = 0.2, 0.7
        phis = np.linspace(-math.pi, math.pi, 100_001)
        p = np.array([wrapped_normal_pdf(g1, x) for x in phis])
        q = np.array([wrapped_normal_pdf(g2, x) for x in phis])
        oracle = np.trapezoid(p * np.log(p / q), phis)
        assert_allclose(classical_kl_wrapped_normal(g1, g2), oracle, atol=1e-7)

    def test_asymmetric_but_non_negative(self):
        fwd = classical_kl_wrapped_normal(0.1, 0.4)
        rev = classical_kl_wrapped_normal(0.4, 0.1)
        assert fwd > 0 and rev > 0
        assert abs(fwd - rev) > 1e-3

    def test_rejects_non_positive_variance(self):
        with pytest.raises(InvalidParameterError):
            classical_kl_wrapped_normal(0.0, 0.1)


class TestChannelModel:
    def test_choi_dispatch(self):
        m = ChannelModel("loss_dephasing", 3, 0.1, 0.9)
        assert_allclose(m.choi().matrix.entries,
                        loss_dephasing_choi(0.9, 0.1, 3).matrix.entries)

    def test_cutoff_property(self):
        assert ChannelModel("dephasing", 6, 0.1).choi().cutoff == 6

    def test_rejects_unknown_kind(self):
        with pytest.raises(InvalidParameterError):
            ChannelModel("amplifier", 3)

    def test_rejects_bad_parameters(self):
        with pytest.raises(InvalidParameterError):
            ChannelModel("dephasing", 3, gamma=-0.1)
        with pytest.raises(InvalidParameterError):
            ChannelModel("loss", 3, eta=1.5)

    def test_choi_matrix_validates_trace_preservation(self):
        idx = dephasing_choi(0.1, 2).idx
        with pytest.raises(InvalidParameterError):
            ChoiMatrix(HermitianMatrix(np.eye(9) * 2.0), idx)
