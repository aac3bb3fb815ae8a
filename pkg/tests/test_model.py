"""Tests for configuration types, index mapping, and schedule algebra."""

import math

import numpy as np
import pytest

from coopsense.model import (
    BernoulliSchedule,
    NetworkConfig,
    NodeChannel,
    PuSignalModel,
    Realization,
    enumerate_realizations,
    flat_index,
    realization_mass,
    realization_masses,
    realization_table,
    theta_autocorr,
    theta_cov,
    unflatten,
)


class TestFlatIndex:
    def test_memoryless_is_identity_on_nodes(self):
        cfg = NetworkConfig(K=5, N=10, L=0)
        for k in range(1, 6):
            assert flat_index(k, 0, cfg) == k
            assert unflatten(k, cfg) == (k, 0)

    def test_two_node_one_lag_layout(self):
        # n = 4 with entries (1,0), (1,1), (2,0), (2,1)
        cfg = NetworkConfig(K=2, N=10, L=1)
        assert unflatten(3, cfg) == (2, (3 + 1) % 2)  # (2, 0)
        assert unflatten(4, cfg) == (2, 1)
        assert flat_index(2, 0, cfg) == 3
        assert flat_index(2, 1, cfg) == 4

    def test_round_trip_three_nodes_two_lags(self):
        cfg = NetworkConfig(K=3, N=10, L=2)
        seen = set()
        for i in range(1, cfg.n + 1):
            k, l = unflatten(i, cfg)
            assert flat_index(k, l, cfg) == i
            # closed forms
            assert k == math.ceil(i / (cfg.L + 1))
            assert l == (i + cfg.L) % (cfg.L + 1)
            seen.add((k, l))
        assert len(seen) == cfg.n

    def test_bijection_over_size_grid(self):
        # exhaustive bijection check up to n = 10^4
        for K, L in [(1, 0), (4, 3), (7, 2), (100, 99), (10000, 0)]:
            cfg = NetworkConfig(K=K, N=1, L=L)
            width = L + 1
            i = np.arange(1, cfg.n + 1)
            k = np.ceil(i / width).astype(int)
            l = (i + L) % width
            back = (k - 1) * width + l + 1
            assert np.array_equal(back, i)

    def test_out_of_range_raises(self):
        cfg = NetworkConfig(K=2, N=10, L=1)
        with pytest.raises(IndexError):
            flat_index(0, 0, cfg)
        with pytest.raises(IndexError):
            flat_index(3, 0, cfg)
        with pytest.raises(IndexError):
            flat_index(1, 2, cfg)
        with pytest.raises(IndexError):
            unflatten(0, cfg)
        with pytest.raises(IndexError):
            unflatten(5, cfg)


class TestRealizationMass:
    def test_deterministic_schedule(self):
        sched = BernoulliSchedule(np.ones(4))
        assert realization_mass(sched, Realization.ones(4)) == 1.0
        assert realization_mass(sched, Realization.zeros(4)) == 0.0

    def test_two_factor_product(self):
        sched = BernoulliSchedule(np.array([0.6, 0.8]))
        b = Realization(np.array([1, 0]))
        assert realization_mass(sched, b) == pytest.approx(0.6 * 0.2, abs=1e-15)

    @pytest.mark.parametrize("n", [1, 3, 8, 12])
    def test_mass_sums_to_one(self, n):
        rng = np.random.default_rng(7 + n)
        sched = BernoulliSchedule(rng.uniform(0, 1, n))
        total = sum(realization_mass(sched, b) for b in enumerate_realizations(n))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(3)
        sched = BernoulliSchedule(rng.uniform(0, 1, 6))
        B = realization_table(6)
        masses = realization_masses(sched, B)
        for row, m in zip(B, masses):
            assert m == pytest.approx(realization_mass(sched, Realization(row)), rel=1e-14)

    def test_log_space_large_window(self):
        # n > 30 goes through the log-space branch; compare against exact logs
        n = 40
        rng = np.random.default_rng(11)
        p = rng.uniform(0.05, 0.95, n)
        sched = BernoulliSchedule(p)
        b = Realization((rng.uniform(size=n) < 0.5).astype(np.int8))
        expected = math.exp(sum(
            math.log(p[i]) if b.b[i] else math.log1p(-p[i]) for i in range(n)
        ))
        assert realization_mass(sched, b) == pytest.approx(expected, rel=1e-12)

    def test_length_mismatch(self):
        sched = BernoulliSchedule(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            realization_mass(sched, Realization.ones(3))


class TestThetaMoments:
    def setup_method(self):
        self.cfg = NetworkConfig(K=3, N=10, L=1)
        rng = np.random.default_rng(5)
        self.sched = BernoulliSchedule(rng.uniform(0, 1, self.cfg.n))

    def test_cross_node_zero(self):
        assert theta_cov(self.sched, self.cfg, 1, 2, 0, 0) == 0.0
        assert theta_cov(self.sched, self.cfg, 3, 1, 1, 1) == 0.0

    def test_cross_lag_zero(self):
        assert theta_cov(self.sched, self.cfg, 2, 2, 0, 1) == 0.0

    def test_deterministic_entry_no_variance(self):
        sched = BernoulliSchedule(np.ones(self.cfg.n))
        assert theta_cov(sched, self.cfg, 1, 1, 0, 0) == 0.0

    def test_bernoulli_variance(self):
        sched = BernoulliSchedule(np.full(self.cfg.n, 0.5))
        assert theta_cov(sched, self.cfg, 2, 2, 1, 1) == pytest.approx(0.25)

    def test_cov_matrix_diagonal_and_bounded(self):
        cfg, sched = self.cfg, self.sched
        pairs = [(k, l) for k in range(1, cfg.K + 1) for l in range(cfg.L + 1)]
        M = np.array([
            [theta_cov(sched, cfg, k1, k2, l1, l2) for (k2, l2) in pairs]
            for (k1, l1) in pairs
        ])
        assert np.allclose(M, np.diag(np.diag(M)))
        d = np.diag(M)
        assert np.all(d >= 0.0) and np.all(d <= 0.25 + 1e-15)
        expected = sched.p * (1 - sched.p)
        assert np.allclose(d, expected)

    def test_autocorr_consistency(self):
        # E[theta_i theta_j] - E[theta_i]E[theta_j] == theta_cov
        cfg, sched = self.cfg, self.sched
        for (k1, l1) in [(1, 0), (2, 1), (3, 0)]:
            for (k2, l2) in [(1, 0), (1, 1), (2, 1)]:
                i = flat_index(k1, l1, cfg) - 1
                j = flat_index(k2, l2, cfg) - 1
                r = theta_autocorr(sched, cfg, k1, k2, l1, l2)
                c = r - sched.p[i] * sched.p[j]
                assert c == pytest.approx(theta_cov(sched, cfg, k1, k2, l1, l2), abs=1e-15)


class TestTypes:
    def test_network_config_validation(self):
        with pytest.raises(ValueError):
            NetworkConfig(K=0, N=10)
        with pytest.raises(ValueError):
            NetworkConfig(K=1, N=10, sigma_z2=0.0)
        with pytest.raises(ValueError):
            NetworkConfig(K=1, N=10, alpha=1.0)
        cfg = NetworkConfig(K=3, N=20, L=1)
        assert cfg.n == 6

    def test_schedule_validation_and_budget(self):
        with pytest.raises(ValueError):
            BernoulliSchedule(np.array([1.2]))
        sched = BernoulliSchedule.uniform(0.5, 4)
        assert sched.budget_ok(eta=0.5)
        assert not sched.budget_ok(eta=0.6)

    def test_realization_validation(self):
        with pytest.raises(ValueError):
            Realization(np.array([0, 2]))

    def test_channel_from_snr(self):
        ch = NodeChannel.from_snr_db(5.0, noise_var=1.0, sig_power=1.0)
        assert ch.gain_mean == pytest.approx(10 ** 0.5)
        ch2 = NodeChannel.from_snr_db(0.0, noise_var=2.0, sig_power=4.0)
        assert ch2.gain_mean * 4.0 / 2.0 == pytest.approx(1.0)

    def test_signal_model_autocorr(self):
        # white: rho_s(tau) = delta_tau
        sig = PuSignalModel.white(2.0)
        assert sig.sq_corr(0) == pytest.approx(8.0)   # sigma^4 * 2
        assert sig.sq_corr(3) == pytest.approx(4.0)   # sigma^4
        # MA window 2, full weight: rho_s(1) = 1/2
        sig2 = PuSignalModel(power=1.0, ma_window=2, ma_weight=1.0)
        assert sig2.amp_autocorr(1) == pytest.approx(0.5)
        assert sig2.sq_corr(1) == pytest.approx(1.25)
        assert sig2.sq_corr(-1) == sig2.sq_corr(1)
        taps = sig2.taps()
        assert taps @ taps == pytest.approx(1.0)

    def test_enumeration_guard(self):
        with pytest.raises(ValueError):
            list(enumerate_realizations(25))
