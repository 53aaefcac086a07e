import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import crandn, mmse_expanded, monte_carlo_mse, power_iteration, random_psd
from tamlab.channel import ArrayGeometry
from tamlab.txrx import (
    LinkConfig,
    SingularChannelError,
    eigen_beamformer,
    gram_inverse_add_antenna,
    mmse_error_covariance,
    mmse_receiver,
    receiver_error_covariance,
    sinr_from_mse,
    user_rate,
    zf_gain,
    zf_precoder,
    zf_rate_direct,
    zf_rates,
    zf_user_rate,
)

SMALL = ArrayGeometry(m_col=2, m_row=1)


class TestEigenBeamformer:
    def test_diagonal_covariance(self):
        W = eigen_beamformer(np.diag([4.0, 1.0]), 2, 1.0, SMALL)
        want = np.zeros((4, 2))
        want[0, 0] = want[2, 1] = 1.0
        np.testing.assert_allclose(W, want, atol=1e-15)

    def test_identity_tie_break(self):
        W = eigen_beamformer(np.eye(2), 1, 1.0, SMALL)
        np.testing.assert_allclose(np.abs(W[:, 0]), [1, 0, 0, 0], atol=1e-15)

    def test_power_scaling(self):
        W = eigen_beamformer(np.diag([2.0, 1.0]), 2, 0.25, SMALL)
        np.testing.assert_allclose(np.linalg.norm(W, axis=0), [0.5, 0.5])

    def test_matches_power_iteration(self):
        g = ArrayGeometry(m_col=2, m_row=2)
        rng = np.random.default_rng(5)
        R = random_psd(rng, 4)
        W = eigen_beamformer(R, 2, 1.0, g)
        u = power_iteration(R)
        np.testing.assert_allclose(W[:4, 0], u, atol=1e-8)
        np.testing.assert_allclose(W[4:, 1], u, atol=1e-8)
        assert np.all(W[4:, 0] == 0) and np.all(W[:4, 1] == 0)

    def test_muted_rows_exactly_zero(self):
        g = ArrayGeometry(m_col=2, m_row=2)
        rng = np.random.default_rng(2)
        active = np.array([True, False, True, False])
        W = eigen_beamformer(random_psd(rng, 4), 2, 1.0, g, active=active)
        act = np.concatenate([active, active])
        assert np.all(W[~act] == 0)
        np.testing.assert_allclose(np.linalg.norm(W, axis=0), 1.0)

    def test_empty_mask_gives_zero(self):
        W = eigen_beamformer(np.eye(2), 2, 1.0, SMALL, active=np.zeros(2, bool))
        assert not W.any()

    def test_rejects_non_psd(self):
        with pytest.raises(ValueError):
            eigen_beamformer(-np.eye(2), 1, 1.0, SMALL)

    @pytest.mark.parametrize("L", [0, 3])
    def test_rejects_stream_count(self, L):
        with pytest.raises(ValueError):
            eigen_beamformer(np.eye(2), L, 1.0, SMALL)


class TestMmse:
    def test_noiseless_limit(self):
        P = 4.0
        W = np.sqrt(P) * np.eye(2)
        V = mmse_receiver(np.eye(2), W, W, 1e-12)
        np.testing.assert_allclose(V, np.eye(2) / np.sqrt(P), rtol=1e-9)

    def test_large_noise_limit(self):
        rng = np.random.default_rng(0)
        H, W = crandn(rng, 2, 3), crandn(rng, 3, 2)
        s2 = 1e9
        np.testing.assert_allclose(mmse_receiver(H, W, W, s2), H @ W / s2, rtol=1e-6)

    def test_zero_precoder_gives_identity(self):
        E = mmse_error_covariance(np.ones((2, 3)), np.zeros((3, 2)), 1.0)
        np.testing.assert_allclose(E, np.eye(2))

    def test_scalar_closed_form(self):
        h, w, s2 = 0.7 - 0.2j, 1.3, 0.4
        E = mmse_error_covariance(np.array([[h]]), np.array([[w]]), s2)
        assert E[0, 0].real == pytest.approx(1 / (1 + abs(h * w) ** 2 / s2), rel=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_equivalence_with_expanded_form(self, seed):
        rng = np.random.default_rng(seed)
        N, M, L, K = 4, 8, 2, 3
        H = crandn(rng, N, M)
        W = crandn(rng, M, L * K)
        Wk = W[:, :L]
        s2 = rng.uniform(0.1, 2.0)
        V = mmse_receiver(H, W, Wk, s2)
        Ri = H @ W[:, L:] @ W[:, L:].conj().T @ H.conj().T + s2 * np.eye(N)
        E10 = mmse_error_covariance(H, Wk, Ri)
        E9 = mmse_expanded(H, W, Wk, V, s2)
        np.testing.assert_allclose(E9, E10, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(receiver_error_covariance(H, W, Wk, V, s2), E9, atol=1e-12)

    def test_monte_carlo_optimality(self):
        rng = np.random.default_rng(42)
        N, M = 2, 4
        H = crandn(rng, N, M)
        W = crandn(rng, M, 2) / 2
        Wk = W[:, :1]
        s2 = 0.3
        V = mmse_receiver(H, W, Wk, s2)
        best = monte_carlo_mse(H, W, [0], V, s2, np.random.default_rng(1))[0]
        for i in range(100):
            Vr = V + 0.3 * crandn(np.random.default_rng(100 + i), N, 1)
            assert monte_carlo_mse(H, W, [0], Vr, s2, np.random.default_rng(1))[0] > best

    def test_rejects_nonpositive_noise(self):
        with pytest.raises(ValueError):
            mmse_receiver(np.eye(2), np.eye(2), np.eye(2), 0.0)
        with pytest.raises(np.linalg.LinAlgError):
            mmse_error_covariance(np.eye(2), np.eye(2), 0.0)

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(3)
        H = crandn(rng, 5, 2, 4)
        W = crandn(rng, 4, 2)
        E = mmse_error_covariance(H, W, 0.5)
        for f in range(5):
            np.testing.assert_allclose(E[f], mmse_error_covariance(H[f], W, 0.5), atol=1e-14)


class TestSinrAndRate:
    def test_identity_mse(self):
        assert sinr_from_mse(np.eye(2)) == 0.0

    def test_single_stream(self):
        assert sinr_from_mse(np.array([[0.5]])) == pytest.approx(1.0)

    def test_two_streams(self):
        assert sinr_from_mse(np.diag([0.2, 0.5])) == pytest.approx(2.5)

    @pytest.mark.parametrize("bad", [0.0, 1.5, -0.1])
    def test_rejects_invalid_mse(self, bad):
        with pytest.raises(ValueError):
            sinr_from_mse(np.array([[bad]]))

    def test_zero_signal_zero_rate(self):
        r = user_rate(np.ones((3, 2, 4)), np.zeros((4, 2)), 1.0)
        assert r.rate == 0.0

    def test_threshold_conversion(self):
        # full band: 273 PRBs of 360 kHz at SE 6.105 over 0.5 ms is about 0.3 Mbit
        se = 6.105
        sinr = 2**se - 1
        h = np.array([[np.sqrt(sinr)]])
        r = user_rate(h, np.array([[1.0]]), 1.0)
        assert r.spectral_efficiency[0] == pytest.approx(se, rel=1e-12)
        assert 273 * r.rate == pytest.approx(0.3e6, rel=1e-3)

    def test_cap(self):
        h = np.array([[np.sqrt(2.0**20 - 1)]])
        r = user_rate(h, np.array([[1.0]]), 1.0, se_cap=8.0)
        assert r.spectral_efficiency[0] == 8.0

    def test_rate_is_sum_over_prbs(self):
        rng = np.random.default_rng(9)
        H = crandn(rng, 3, 2, 4)
        W = crandn(rng, 4, 2)
        r = user_rate(H, W, 0.2, bandwidth_per_prb=1e3, slot_duration=1e-3)
        parts = [user_rate(H[f], W, 0.2, bandwidth_per_prb=1e3, slot_duration=1e-3).rate for f in range(3)]
        assert r.rate == pytest.approx(sum(parts), rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), noise=st.floats(1e-4, 1e3), cap=st.floats(0.5, 10))
    def test_se_within_cap_and_sinr_nonnegative(self, seed, noise, cap):
        rng = np.random.default_rng(seed)
        r = user_rate(crandn(rng, 2, 2, 4), crandn(rng, 4, 2), noise, se_cap=cap)
        assert np.all(r.sinr >= 0)
        assert np.all(r.spectral_efficiency <= 2 * cap + 1e-12)
        assert np.all(r.spectral_efficiency >= 0)


class TestLinkConfig:
    def test_from_totals(self):
        link = LinkConfig.from_totals(8.0, 4, 2)
        assert link.stream_power == 1.0

    @pytest.mark.parametrize("kw", [dict(noise_power=0), dict(stream_power=-1), dict(se_cap=0),
                                    dict(n_streams=3)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            LinkConfig(**kw)


class TestZeroForcing:
    def test_identity(self):
        np.testing.assert_allclose(zf_precoder(np.eye(3)), np.eye(3))

    def test_orthonormal_rows(self):
        rng = np.random.default_rng(0)
        Q, _ = np.linalg.qr(crandn(rng, 5, 5))
        H = Q[:2]
        np.testing.assert_allclose(zf_precoder(H), H.conj().T, atol=1e-12)
        np.testing.assert_allclose(zf_gain(H), 1.0)

    def test_residual(self):
        rng = np.random.default_rng(1)
        H = crandn(rng, 3, 6)
        np.testing.assert_allclose(H @ zf_precoder(H), np.eye(3), atol=1e-8)

    def test_rate_identity_channel(self):
        assert zf_user_rate(np.eye(2), 0, 1.0, 1.0, 10.0) == pytest.approx(10.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_norm_and_inverse_forms_agree(self, seed):
        rng = np.random.default_rng(seed)
        H = crandn(rng, 3, 7)
        W = zf_precoder(H)
        b_norm = 1.0 / np.linalg.norm(W, axis=0) ** 2
        np.testing.assert_allclose(b_norm, zf_gain(H), rtol=1e-10)
        for k in range(3):
            assert zf_rate_direct(H, W, k, 2.0, 0.5, 1.0) == pytest.approx(
                zf_user_rate(H, k, 2.0, 0.5, 1.0), rel=1e-10)

    def test_batched_rates(self):
        rng = np.random.default_rng(4)
        H = crandn(rng, 6, 2, 5)
        r = zf_rates(H, 1.0, 1.0, 1.0)
        for i in range(6):
            np.testing.assert_allclose(r[i], [zf_user_rate(H[i], k, 1.0, 1.0, 1.0) for k in range(2)])

    def test_too_few_antennas(self):
        with pytest.raises(SingularChannelError):
            zf_precoder(np.ones((3, 2)))

    def test_rank_deficient(self):
        H = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
        with pytest.raises(SingularChannelError):
            zf_gain(H)


class TestRankOneUpdate:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_direct_inverse(self, seed):
        rng = np.random.default_rng(seed)
        H = crandn(rng, 3, 5)
        h = crandn(rng, 3)
        G = H @ H.conj().T
        got = gram_inverse_add_antenna(np.linalg.inv(G), h)
        np.testing.assert_allclose(got, np.linalg.inv(G + np.outer(h, h.conj())), rtol=1e-10, atol=1e-12)
