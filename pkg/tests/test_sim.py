"""Monte Carlo engine: physics fidelity, CFAR rates, trends, SNR loss."""

import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from coopsense.compensator import fit
from coopsense.detection import (
    FusionRule,
    benchmark_weights,
    pd_alpha_overall,
    qfunc,
    qfunc_inv,
)
from coopsense.model import (
    BernoulliSchedule,
    NetworkConfig,
    NodeChannel,
    PuSignalModel,
)
from coopsense.moments import build_moments, calibrate_ma_weight, report_covariance
from coopsense.sim import (
    CsiPerturbation,
    TrialBatch,
    benchmark_pd_alpha,
    binomial_ci_halfwidth,
    dispersion_snrs,
    empirical_croc,
    error_probability,
    make_pmd_method,
    perturb_csi,
    required_snr,
    run_batch,
    snr_loss,
)
from coopsense.sim import _stream

SIGMA_Z2 = 10.0
RHO = 0.1


def fig_setup(snrs, L=0, alpha=0.01, eta=0.0, independent=False):
    """Network, channels, signal, moments and fusion weights for a node set."""
    cfg = NetworkConfig(K=len(snrs), N=20, L=L, sigma_z2=SIGMA_Z2,
                        alpha=alpha, eta=eta)
    chans = [NodeChannel.from_snr_db(s) for s in snrs]
    sig = calibrate_ma_weight(NodeChannel.from_snr_db(5.0), 1.0, cfg.N, RHO)
    mom = build_moments(cfg, chans, sig, independent_nodes=independent)
    w = benchmark_weights(mom, SIGMA_Z2, kind="optimal")
    return cfg, chans, sig, mom, w


def fitted(mom, p0_or_sched, sigma_z2=SIGMA_Z2):
    """Compensator for a uniform forwarding level or explicit schedule."""
    sched = (p0_or_sched if isinstance(p0_or_sched, BernoulliSchedule)
             else BernoulliSchedule.uniform(p0_or_sched, mom.n))
    comp = fit(mom, report_covariance(mom, sched, sigma_z2))
    return sched, comp


class TestStreams:
    def test_same_key_reproduces(self):
        """A stream cell is a pure function of (seed, role, hypothesis, chunk)."""
        a = _stream(42, "noise", 1, 3).standard_normal(8)
        b = _stream(42, "noise", 1, 3).standard_normal(8)
        assert np.array_equal(a, b)

    def test_distinct_roles_decorrelated(self):
        """Different roles, hypotheses and chunks draw from different streams."""
        base = _stream(42, "noise", 0, 0).standard_normal(8)
        for cell in (("report", 0, 0), ("noise", 1, 0), ("noise", 0, 1)):
            other = _stream(42, *cell).standard_normal(8)
            assert not np.array_equal(base, other)

    def test_seed_domain_checked(self):
        """Seeds outside the unsigned 64-bit range are rejected."""
        with pytest.raises(ValueError, match="64-bit"):
            _stream(-1, "noise", 0, 0)


class TestRunBatchRecords:
    def test_shapes_and_immutability(self):
        """Every per-trial record shares the trial axis and is write-protected."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0), L=1)
        sched, comp = fitted(mom, 0.8)
        b = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="mixed",
                      trials=500, seed=3, mom=mom)
        assert b.u.shape == (500, 6)
        assert b.theta.shape == (500, 6)
        assert b.y_L.shape == (500, 6)
        assert b.u_hat.shape == (500, 3)
        assert b.S.shape == (500,)
        assert b.trials == 500 and b.n == 6
        for name in ("h", "u", "theta", "y_L", "u_hat", "S", "tau", "decision"):
            assert not getattr(b, name).flags.writeable

    def test_bit_identical_replay(self):
        """Identical seed and configuration reproduce the records bit for bit."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0))
        sched, comp = fitted(mom, 0.6)
        kw = dict(hypothesis="mixed", trials=2000, seed=11, mom=mom)
        a = run_batch(cfg, chans, sig, sched, comp, w, **kw)
        b = run_batch(cfg, chans, sig, sched, comp, w, **kw)
        for name in ("h", "u", "theta", "y_L", "u_hat", "S", "tau", "decision"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_seed_moves_the_draw(self):
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0))
        sched, comp = fitted(mom, 0.6)
        a = run_batch(cfg, chans, sig, sched, comp, w, trials=200, seed=1, mom=mom)
        b = run_batch(cfg, chans, sig, sched, comp, w, trials=200, seed=2, mom=mom)
        assert not np.array_equal(a.u, b.u)

    def test_mixed_hypothesis_follows_prior(self):
        """Hypothesis labels are Bernoulli with the configured occupancy prior."""
        cfg = NetworkConfig(K=2, N=20, L=0, sigma_z2=SIGMA_Z2, prior_h1=0.3)
        chans = [NodeChannel.from_snr_db(5.0)] * 2
        sig = PuSignalModel.white(1.0)
        mom = build_moments(cfg, chans, sig)
        sched, comp = fitted(mom, 1.0)
        b = run_batch(cfg, chans, sig, sched, comp, np.ones(2),
                      hypothesis="mixed", trials=40_000, seed=5, mom=mom)
        rate = b.h.mean()
        assert abs(rate - 0.3) <= 3.0 * math.sqrt(0.3 * 0.7 / 40_000)

    def test_fixed_rule_threshold(self):
        """A FusionRule applies its own threshold to every trial."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0))
        sched, comp = fitted(mom, 0.8)
        rule = FusionRule(w=w, tau=55.0)
        b = run_batch(cfg, chans, sig, sched, comp, rule, hypothesis="h0",
                      trials=300, seed=9)
        assert np.all(b.tau == 55.0)
        assert np.array_equal(b.decision, b.S > 55.0)

    def test_validation_errors(self):
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0))
        sched, comp = fitted(mom, 0.8)
        with pytest.raises(ValueError, match="channels"):
            run_batch(cfg, chans[:2], sig, sched, comp, w, trials=10, mom=mom)
        with pytest.raises(ValueError, match="weights"):
            run_batch(cfg, chans, sig, sched, comp, np.ones(4), trials=10, mom=mom)
        with pytest.raises(ValueError, match="hypothesis"):
            run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h2",
                      trials=10, mom=mom)
        with pytest.raises(ValueError, match="trials"):
            run_batch(cfg, chans, sig, sched, comp, w, trials=0, mom=mom)
        with pytest.raises(ValueError, match="alpha"):
            run_batch(cfg, chans, sig, sched, comp, w, alpha=1.5, trials=10,
                      mom=mom)
        with pytest.raises(ValueError, match="summary mode"):
            run_batch(cfg, chans, sig, sched, comp, w, trials=10, mom=mom,
                      summary_mode="exact")
        bad = BernoulliSchedule.uniform(0.5, 4)
        with pytest.raises(ValueError, match="schedule"):
            run_batch(cfg, chans, sig, bad, comp, w, trials=10, mom=mom)


class TestPhysics:
    def test_vacant_energy_mean(self):
        """Under the vacant hypothesis each summary is a unit-noise energy sum
        of N samples, so its mean is N within Monte Carlo error."""
        cfg = NetworkConfig(K=2, N=20, L=0, sigma_z2=SIGMA_Z2)
        chans = [NodeChannel.from_snr_db(5.0)] * 2
        sig = PuSignalModel.white(1.0)
        mom = build_moments(cfg, chans, sig)
        sched, comp = fitted(mom, 1.0)
        b = run_batch(cfg, chans, sig, sched, comp, np.ones(2),
                      hypothesis="h0", trials=50_000, seed=1, mom=mom)
        tol = 3.0 * math.sqrt(20.0 / 50_000)
        assert np.all(np.abs(b.u.mean(axis=0) - 20.0) <= tol)

    def test_silent_schedule_reports_pure_noise(self):
        """With forwarding probability zero every report is reporting noise."""
        cfg = NetworkConfig(K=2, N=20, L=0, sigma_z2=SIGMA_Z2)
        chans = [NodeChannel.from_snr_db(5.0)] * 2
        sig = PuSignalModel.white(1.0)
        mom = build_moments(cfg, chans, sig)
        sched, comp = fitted(mom, 0.0)
        b = run_batch(cfg, chans, sig, sched, comp, np.ones(2),
                      hypothesis="mixed", trials=50_000, seed=2, mom=mom)
        assert np.all(b.theta == 0)
        se = math.sqrt(SIGMA_Z2 / 50_000)
        assert np.all(np.abs(b.y_L.mean(axis=0)) <= 3.0 * se)
        assert np.allclose(b.y_L.std(axis=0), math.sqrt(SIGMA_Z2), rtol=0.02)

    def test_occupied_mean_matches_moments(self):
        """Physics-mode summary means agree with the analytic moment model."""
        cfg, chans, sig, mom, w = fig_setup((8.0, 3.0), L=1)
        sched, comp = fitted(mom, 1.0)
        b = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h1",
                      trials=60_000, seed=4, mom=mom)
        sd = np.sqrt(np.diag(mom.C_uL_h[1]) / 60_000)
        assert np.all(np.abs(b.u.mean(axis=0) - mom.mu_uL_h[1]) <= 4.0 * sd)

    def test_gaussian_mode_matches_moments(self):
        """Moment-model draws reproduce both conditional mean and covariance."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0), L=1)
        sched, comp = fitted(mom, 0.8)
        b = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h1",
                      trials=120_000, seed=6, mom=mom, summary_mode="gaussian")
        sd = np.sqrt(np.diag(mom.C_uL_h[1]) / 120_000)
        assert np.all(np.abs(b.u.mean(axis=0) - mom.mu_uL_h[1]) <= 4.0 * sd)
        emp = np.cov(b.u, rowvar=False)
        scale = np.abs(np.diag(mom.C_uL_h[1])).max()
        assert np.abs(emp - mom.C_uL_h[1]).max() <= 0.02 * scale


class TestCfarRates:
    def test_gaussian_mode_holds_alpha(self):
        """Pattern-adaptive thresholds pin the false-alarm rate at alpha when
        the summaries follow the moment model the thresholds assume."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0), L=1, alpha=0.05)
        sched, comp = fitted(mom, 0.6)
        b = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h0",
                      trials=100_000, seed=13, mom=mom, summary_mode="gaussian")
        ci = binomial_ci_halfwidth(0.05, 100_000)
        assert abs(b.false_alarm_rate - 0.05) <= ci

    def test_physics_mode_small_positive_bias(self):
        """Raw energy statistics are right-skewed at N = 20, so the Gaussian
        threshold model under-covers the far tail by a few parts per thousand;
        the bias is real, positive and small (about +0.002 at alpha = 0.01,
        measured at one million trials)."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0), alpha=0.01)
        sched, comp = fitted(mom, 0.8)
        b = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h0",
                      trials=200_000, seed=14, mom=mom)
        bias = b.false_alarm_rate - 0.01
        assert 0.0005 <= bias <= 0.006

    def test_analytic_empirical_detection_agreement(self):
        """Empirical detection rate tracks the pattern-mixture analysis within
        0.02 absolute at one hundred thousand trials."""
        cfg, chans, sig, mom, w = fig_setup((-0.5, 2.5, 5.5), alpha=0.01)
        sched, comp = fitted(mom, 0.8)
        pd_an = pd_alpha_overall(sched, w, comp, mom, cfg.alpha)
        b = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h1",
                      trials=100_000, seed=7, mom=mom)
        assert 0.05 < pd_an < 0.999
        assert abs(b.detection_rate - pd_an) <= 0.02


class TestEmpiricalCroc:
    def test_grid_validation(self):
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0))
        sched, comp = fitted(mom, 0.7)
        with pytest.raises(ValueError, match="alphas"):
            empirical_croc(cfg, chans, sig, sched, comp, w, [], trials=10)
        with pytest.raises(ValueError, match="alphas"):
            empirical_croc(cfg, chans, sig, sched, comp, w, [0.1, 1.0], trials=10)

    def test_curve_is_monotone_in_alpha(self):
        """Raising alpha lowers every threshold, so the false-alarm rate rises
        and the missed-detection rate falls along the grid."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0))
        sched, comp = fitted(mom, 0.7)
        c = empirical_croc(cfg, chans, sig, sched, comp, w,
                           [0.01, 0.05, 0.1, 0.2], trials=5000, seed=21, mom=mom)
        assert np.all(np.diff(c.pf) >= 0.0)
        assert np.all(np.diff(c.pmd) <= 0.0)
        assert np.all(c.pf_ci > 0.0) and np.all(c.pmd_ci > 0.0)

    def test_high_snr_missed_detection_vanishes(self):
        """Strong channels drive the missed-detection rate to the tiny
        attendance floor across the alpha grid."""
        cfg, chans, sig, mom, w = fig_setup((25.0, 25.0, 25.0))
        sched, comp = fitted(mom, 0.9)
        c = empirical_croc(cfg, chans, sig, sched, comp, w,
                           [0.05, 0.1, 0.2], trials=20_000, seed=23, mom=mom)
        assert np.all(c.pmd <= 0.01)

    def test_efficiency_degrades_detection(self):
        """Raising the efficiency level raises missed detection pointwise."""
        alphas = np.array([0.01, 0.05, 0.1, 0.2])
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0))
        prev = None
        for eta in (0.3, 0.5, 0.7, 0.9):
            sched, comp = fitted(mom, 1.0 - eta)
            c = empirical_croc(cfg, chans, sig, sched, comp, w, alphas,
                               trials=30_000, seed=17, mom=mom)
            if prev is not None:
                assert np.all(c.pmd - prev.pmd >= -(c.pmd_ci + prev.pmd_ci))
            prev = c

    def test_longer_memory_dominates(self):
        """The deeper compensation window yields a pointwise better curve."""
        alphas = np.array([0.01, 0.05, 0.1, 0.2])
        curves = {}
        for L in (0, 1):
            cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0), L=L)
            sched, comp = fitted(mom, 0.5)
            curves[L] = empirical_croc(cfg, chans, sig, sched, comp, w, alphas,
                                       trials=30_000, seed=17, mom=mom)
        gap_ci = curves[0].pmd_ci + curves[1].pmd_ci
        assert np.all(curves[0].pmd - curves[1].pmd >= -gap_ci)


class TestPerturbCsi:
    def test_zero_variance_is_identity(self):
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 7.0), independent=True)
        assert perturb_csi(mom, CsiPerturbation(0.0), seed=3) is mom

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError, match="normalized_var"):
            CsiPerturbation(-0.1)

    def test_psd_and_consistency(self):
        """Perturbed covariances stay positive semidefinite and every derived
        statistic is rebuilt consistently."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 7.0), L=1)
        for seed in range(5):
            mp = perturb_csi(mom, CsiPerturbation(0.5), seed=seed)
            for h in (0, 1):
                assert np.linalg.eigvalsh(mp.C_uL_h[h]).min() >= -1e-9
                assert np.allclose(
                    mp.R_uL_h[h],
                    mp.C_uL_h[h] + np.outer(mp.mu_uL_h[h], mp.mu_uL_h[h]))
            pr1 = mom.prior_h1
            assert np.allclose(mp.mu_uL, (1 - pr1) * mp.mu_uL_h[0]
                               + pr1 * mp.mu_uL_h[1])
            assert np.allclose(mp.C_uL, (1 - pr1) * mp.C_uL_h[0]
                               + pr1 * mp.C_uL_h[1])

    def test_multiplicative_noise_fixes_exact_zeros(self):
        """Independent-sensor moment sets keep their zero cross-covariances."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 7.0), independent=True)
        mp = perturb_csi(mom, CsiPerturbation(0.2), seed=9)
        off = mp.C_uL_h[1] - np.diag(np.diag(mp.C_uL_h[1]))
        assert np.abs(off).max() <= 1e-6 * np.abs(mp.C_uL_h[1]).max()

    def test_diagonal_only_mode_touches_diagonal(self):
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 7.0), L=1)
        mp = perturb_csi(mom, CsiPerturbation(0.2, diagonal_only=True), seed=9)
        for h in (0, 1):
            a, b = mom.C_uL_h[h], mp.C_uL_h[h]
            mask = ~np.eye(mom.n, dtype=bool)
            # off-diagonal entries move only through the PSD projection
            assert np.abs((a - b)[mask]).max() <= 0.05 * np.abs(a).max()
            assert not np.allclose(np.diag(a), np.diag(b))

    def test_determinism(self):
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 7.0))
        a = perturb_csi(mom, CsiPerturbation(0.1), seed=4)
        b = perturb_csi(mom, CsiPerturbation(0.1), seed=4)
        c = perturb_csi(mom, CsiPerturbation(0.1), seed=5)
        assert np.array_equal(a.C_uL_h, b.C_uL_h)
        assert not np.array_equal(a.C_uL_h, c.C_uL_h)


def _pe_fig8(mom, cfg, chans, sig, w, var, seed, trials=20_000):
    """Error probability when the fusion center trusts a perturbed moment set."""
    momp = perturb_csi(mom, CsiPerturbation(var, diagonal_only=True), seed)
    sched = BernoulliSchedule.uniform(1.0 - cfg.eta, cfg.n)
    comp = fit(momp, report_covariance(momp, sched, cfg.sigma_z2))
    kw = dict(trials=trials, mom=momp, independent_nodes=True)
    b0 = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h0",
                   seed=2 * seed + 10, **kw)
    b1 = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h1",
                   seed=2 * seed + 11, **kw)
    return error_probability(b0, b1)


class TestImperfectCsiError:
    def test_small_error_small_effect(self):
        """One percent normalized variance moves the expected error probability
        by less than ten percent (averaged over perturbation draws)."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 7.0), alpha=0.1,
                                            eta=0.3, independent=True)
        pe0 = _pe_fig8(mom, cfg, chans, sig, w, 0.0, seed=0)
        pes = [_pe_fig8(mom, cfg, chans, sig, w, 0.01, seed=s)
               for s in range(8)]
        assert abs(np.mean(pes) - pe0) <= 0.10 * pe0

    def test_error_grows_with_csi_variance(self):
        """Error probability trends upward in the estimation-error variance."""
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 7.0), alpha=0.1,
                                            eta=0.3, independent=True)
        grid = [0.0, 0.05, 0.1, 0.2]
        table = np.array([[_pe_fig8(mom, cfg, chans, sig, w, v, seed=s,
                                    trials=15_000) for v in grid]
                          for s in range(6)])
        rho_avg = spearmanr(grid, table.mean(axis=0)).statistic
        assert rho_avg > 0.0
        per_seed = [spearmanr(grid, row).statistic for row in table]
        assert np.mean(per_seed) > 0.0


def _toy_batch(hypothesis, decisions):
    """Minimal record batch with prescribed verdicts."""
    m = len(decisions)
    zeros = np.zeros((m, 1))
    return TrialBatch(
        seed=0, hypothesis=hypothesis,
        h=np.full(m, 1 if hypothesis == "h1" else 0, dtype=np.int8),
        u=zeros.copy(), theta=np.zeros((m, 1), dtype=np.int8),
        y_L=zeros.copy(), u_hat=zeros.copy(), S=np.zeros(m),
        tau=np.zeros(m), decision=np.asarray(decisions, dtype=bool))


class TestErrorProbability:
    def test_perfect_detector(self):
        """No false alarms and no misses give zero error probability."""
        b0 = _toy_batch("h0", [False] * 8)
        b1 = _toy_batch("h1", [True] * 8)
        assert error_probability(b0, b1) == 0.0

    def test_matched_rates_closed_form(self):
        """When Pf equals Pd the error probability is pr0 Pf + pr1 (1 - Pf)."""
        b0 = _toy_batch("h0", [True, False, False, False])
        b1 = _toy_batch("h1", [True, False, False, False])
        pe = error_probability(b0, b1, priors=(0.25, 0.75))
        assert pe == pytest.approx(0.25 * 0.25 + 0.75 * 0.75, abs=1e-15)

    def test_requires_pure_batches(self):
        b0 = _toy_batch("h0", [False])
        with pytest.raises(ValueError, match="pure"):
            error_probability(b0, b0)

    def test_priors_validated(self):
        b0 = _toy_batch("h0", [False])
        b1 = _toy_batch("h1", [True])
        with pytest.raises(ValueError, match="priors"):
            error_probability(b0, b1, priors=(0.7, 0.7))


class TestBenchmarkReference:
    def test_alpha_validated(self):
        cfg, chans, sig, mom, w = fig_setup((12.0, 5.0, 10.0))
        with pytest.raises(ValueError, match="alpha"):
            benchmark_pd_alpha(mom, SIGMA_Z2, 0.0)

    def test_matches_compensated_chain_at_full_forwarding(self):
        """With every report forwarded the compensated CFAR chain reduces to
        uninterrupted optimal linear fusion."""
        cfg, chans, sig, mom, w = fig_setup((2.0, 5.0, 8.0), alpha=0.1)
        sched, comp = fitted(mom, 1.0)
        pd_chain = pd_alpha_overall(sched, w, comp, mom, 0.1)
        pd_ref = benchmark_pd_alpha(mom, SIGMA_Z2, 0.1)
        assert pd_ref == pytest.approx(pd_chain, abs=1e-4)

    def test_monotone_in_snr(self):
        pds = []
        for snr in (0.0, 5.0, 10.0):
            _, _, _, mom, _ = fig_setup((snr, snr, snr), alpha=0.1)
            pds.append(benchmark_pd_alpha(mom, SIGMA_Z2, 0.1))
        assert pds[0] < pds[1] < pds[2]


class TestSnrLoss:
    def test_dispersion_layout(self):
        """Nodes split into equal thirds at snr0 + d, snr0, snr0 - d."""
        assert np.allclose(dispersion_snrs(5.0, 3.0, 3), [8.0, 5.0, 2.0])
        assert np.allclose(dispersion_snrs(10.0, 1.0, 6),
                           [11.0, 11.0, 10.0, 10.0, 9.0, 9.0])
        with pytest.raises(ValueError, match="multiple of 3"):
            dispersion_snrs(5.0, 1.0, 4)

    def test_required_snr_inverts_known_curve(self):
        """Bisection recovers the analytic inverse of a Gaussian ramp."""
        pmd = lambda s: float(qfunc((s - 5.0) / 2.0))
        target = 0.3
        expect = 5.0 + 2.0 * qfunc_inv(target)
        got = required_snr(pmd, target, bracket=(-20.0, 30.0), tol_db=1e-5)
        assert got == pytest.approx(expect, abs=1e-4)

    def test_bracket_failure_raises(self):
        pmd = lambda s: float(qfunc((s - 5.0) / 2.0))
        with pytest.raises(ValueError, match="bracket"):
            required_snr(pmd, 0.5, bracket=(20.0, 30.0))

    def test_method_kind_validated(self):
        with pytest.raises(ValueError, match="kind"):
            make_pmd_method("oracle")
        with pytest.raises(ValueError, match="schedule source"):
            make_pmd_method("interrupted", sched_source="grid")

    def test_self_comparison_is_zero(self):
        """A method compared against itself shows exactly zero loss."""
        cfg = NetworkConfig(K=3, N=20, L=0, sigma_z2=SIGMA_Z2, alpha=0.1)
        bench = make_pmd_method("benchmark", delta_db=1.0)
        assert snr_loss(cfg, 0.1, 0.1, bench, bench) == 0.0

    def test_full_forwarding_matches_benchmark(self):
        """At efficiency zero the interrupted system needs no extra SNR."""
        cfg = NetworkConfig(K=3, N=20, L=0, sigma_z2=SIGMA_Z2, alpha=0.1)
        prop = make_pmd_method("interrupted", delta_db=1.0, eta=0.0)
        bench = make_pmd_method("benchmark", delta_db=1.0)
        assert abs(snr_loss(cfg, 0.1, 0.1, prop, bench)) <= 0.05

    def test_loss_grows_with_efficiency(self):
        """More interruption costs more SNR at a matched operating point; the
        missed-detection target sits above the attendance floor so the
        operating point stays reachable at the strongest interruption."""
        cfg = NetworkConfig(K=3, N=20, L=0, sigma_z2=SIGMA_Z2, alpha=0.1)
        bench = make_pmd_method("benchmark", delta_db=1.0)
        losses = []
        for eta in (0.1, 0.5, 0.9):
            prop = make_pmd_method("interrupted", delta_db=1.0, eta=eta,
                                   sched_source="dc-sdp", n_radii=12,
                                   refine_iters=2)
            losses.append(snr_loss(cfg, 0.7, 0.1, prop, bench, tol_db=0.01))
        assert losses[0] >= -0.05
        assert losses[1] >= losses[0] - 0.02
        assert losses[2] >= losses[1] - 0.02

    def test_dispersion_reduces_loss(self):
        """Greater SNR spread lets the optimizer silence the weak node at
        lower cost, shrinking the loss at a fixed efficiency level."""
        cfg = NetworkConfig(K=3, N=20, L=0, sigma_z2=SIGMA_Z2, alpha=0.1)
        losses = {}
        for delta in (0.0, 3.0):
            prop = make_pmd_method("interrupted", delta_db=delta, eta=0.5,
                                   sched_source="dc-sdp", n_radii=12,
                                   refine_iters=2)
            bench = make_pmd_method("benchmark", delta_db=delta)
            losses[delta] = snr_loss(cfg, 0.7, 0.1, prop, bench, tol_db=0.01)
        assert losses[3.0] <= losses[0.0] + 0.02
