"""Monte Carlo engine for the interrupted-cooperation sensing chain.

Realizes the physical chain end to end -- moving-average-shaped Gaussian
primary-user signal, per-node energy detection, Bernoulli-interrupted noisy
reporting, affine MMSE compensation and linear fusion with pattern-adaptive
CFAR thresholds -- and measures empirical operating characteristics:
detection / false-alarm rates, complementary ROC curves, error probability
under imperfect channel knowledge, and SNR-loss comparisons between fusion
strategies.

Randomness is fully reproducible: every random role (hypothesis labels,
signal innovations, fading gains, receiver noise, switch patterns, report
noise) draws from its own counter-based Philox stream keyed by
(seed, role, hypothesis, chunk), so identical seed + configuration yields a
bit-identical record stream regardless of chunking or execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.signal import lfilter

from .compensator import CompensatorWeights, apply as compensate, fit
from .detection import (
    FusionRule,
    benchmark_weights,
    pattern_scalar_stats,
    pd_alpha_overall,
    qfunc,
    qfunc_inv,
)
from .model import (
    BernoulliSchedule,
    NetworkConfig,
    NodeChannel,
    PuSignalModel,
)
from .moments import (
    MomentSet,
    build_moments,
    calibrate_ma_weight,
    report_covariance,
    symmetrize,
)
from .optimize.dc import dc_matrices, solve_dc_sweep

__all__ = [
    "CI_Z99",
    "CrocCurve",
    "CsiPerturbation",
    "TrialBatch",
    "benchmark_pd_alpha",
    "binomial_ci_halfwidth",
    "dispersion_snrs",
    "empirical_croc",
    "error_probability",
    "make_pmd_method",
    "perturb_csi",
    "required_snr",
    "run_batch",
    "snr_loss",
]

# 99% two-sided normal quantile used for binomial confidence intervals.
CI_Z99 = 2.5758293035489004

# Keep one chunk's complex sample block (trials x K x T) under ~320 MB.
_SAMPLE_BUDGET = 20_000_000
DEFAULT_CHUNK = 50_000

# Stream identifiers for the counter-based generator.  Each role owns an
# independent Philox key so adding a consumer never shifts another's draws.
_ROLES = {
    "hypothesis": 0,
    "signal": 1,
    "gain": 2,
    "noise": 3,
    "switch": 4,
    "report": 5,
    "summary": 6,
}


def _stream(seed: int, role: str, h: int, chunk: int) -> np.random.Generator:
    """Philox generator for one (seed, role, hypothesis, chunk) cell."""
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    sub = (_ROLES[role] << 40) | (int(h) << 36) | int(chunk)
    key = np.array([seed, sub], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _complex_noise(rng: np.random.Generator, var: float, shape) -> np.ndarray:
    s = math.sqrt(var / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _draw_gains(rng: np.random.Generator, channel: NodeChannel, size: int) -> np.ndarray:
    """Power gains: fixed in AWGN mode, gamma-distributed otherwise."""
    if channel.gain_var == 0.0:
        return np.full(size, channel.gain_mean)
    shape = channel.gain_mean ** 2 / channel.gain_var
    scale = channel.gain_var / channel.gain_mean
    return rng.gamma(shape, scale, size=size)


def _draw_summaries(
    cfg: NetworkConfig,
    channels: Sequence[NodeChannel],
    sig: PuSignalModel,
    h: int,
    trials: int,
    seed: int,
    independent_nodes: bool,
    chunk: int,
) -> np.ndarray:
    """Energy-detector windows u_L for one hypothesis.

    Returns an (trials, n) array in node-major, lag-minor order with lag 0
    holding the most recent decision interval.  The primary-user signal is
    shared across nodes unless ``independent_nodes`` requests per-node
    independent waveforms.
    """
    n = cfg.n
    out = np.empty((trials, n))
    if trials == 0:
        return out
    if h == 1 and sig.power > 0.0 and sig.sq_autocorr is not None:
        raise ValueError("simulation requires a tap-backed signal model")
    T = cfg.N * (cfg.L + 1)
    taps = sig.taps()
    W = taps.size
    width = cfg.L + 1
    m_cap = max(1, _SAMPLE_BUDGET // max(1, cfg.K * T))
    m_chunk = max(1, min(int(chunk), m_cap))
    for c, start in enumerate(range(0, trials, m_chunk)):
        m = min(m_chunk, trials - start)
        rng_noise = _stream(seed, "noise", h, c)
        if h == 1:
            rng_sig = _stream(seed, "signal", h, c)
            rng_gain = _stream(seed, "gain", h, c)
            n_draws = cfg.K if independent_nodes else 1
            innov = _complex_noise(rng_sig, 1.0, (n_draws, m, T + W - 1))
            shaped = lfilter(taps, [1.0], innov, axis=-1)[..., W - 1:]
        for k in range(cfg.K):
            x = _complex_noise(rng_noise, channels[k].noise_var, (m, T))
            if h == 1:
                s = shaped[k if independent_nodes else 0]
                g = _draw_gains(rng_gain, channels[k], m)
                x = x + np.sqrt(g)[:, None] * s
            energy = np.square(np.abs(x)).reshape(m, width, cfg.N).sum(axis=2)
            # time block j covers lag (L - j); flip so lag runs minor.
            out[start:start + m, k * width:(k + 1) * width] = energy[:, ::-1]
    return out


def _draw_summaries_gaussian(
    mom: MomentSet, h: int, trials: int, seed: int,
) -> np.ndarray:
    """Energy windows drawn from the moment model itself.

    Samples u_L | H_h from the Gaussian the analysis assigns to it, which
    isolates the report/compensation/threshold chain from the energy
    detector's finite-sample skewness.
    """
    C = mom.C_uL_h[h]
    try:
        root = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        root = np.linalg.cholesky(C + 1e-12 * np.trace(C) / C.shape[0]
                                  * np.eye(C.shape[0]))
    g = _stream(seed, "summary", h, 0).standard_normal((trials, mom.n))
    return mom.mu_uL_h[h][None, :] + g @ root.T


@dataclass(frozen=True)
class TrialBatch:
    """Per-trial records of one simulated sensing campaign.

    Arrays all share the leading trial axis: ``h`` holds the realized
    hypothesis label, ``u`` the energy windows, ``theta`` the switch
    patterns, ``y_L`` the received reports, ``u_hat`` the compensated
    summaries, ``S`` the fused statistic, ``tau`` the per-trial threshold
    and ``decision`` the verdicts.  Identical seed + configuration
    reproduces the records bit for bit.
    """

    seed: int
    hypothesis: str
    h: np.ndarray         # (trials,) int8
    u: np.ndarray         # (trials, n)
    theta: np.ndarray     # (trials, n) int8
    y_L: np.ndarray       # (trials, n)
    u_hat: np.ndarray     # (trials, K)
    S: np.ndarray         # (trials,)
    tau: np.ndarray       # (trials,)
    decision: np.ndarray  # (trials,) bool

    def __post_init__(self):
        for name in ("h", "u", "theta", "y_L", "u_hat", "S", "tau", "decision"):
            arr = getattr(self, name)
            if arr.shape[0] != self.trials:
                raise ValueError(f"record {name!r} disagrees on trial count")
            arr.setflags(write=False)

    @property
    def trials(self) -> int:
        return self.S.shape[0]

    @property
    def n(self) -> int:
        return self.u.shape[1]

    def decision_rate(self, h: int) -> float:
        """Fraction of positive decisions among trials with hypothesis h."""
        mask = self.h == h
        count = int(mask.sum())
        if count == 0:
            raise ValueError(f"batch holds no trials under hypothesis {h}")
        return float(self.decision[mask].mean())

    @property
    def false_alarm_rate(self) -> float:
        return self.decision_rate(0)

    @property
    def detection_rate(self) -> float:
        return self.decision_rate(1)


def binomial_ci_halfwidth(rate: float, trials: int, z: float = CI_Z99) -> float:
    """Normal-approximation half width of a binomial rate estimate."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    return z * math.sqrt(max(rate * (1.0 - rate), 0.0) / trials)


def _pattern_threshold_pieces(
    theta: np.ndarray,
    comp: CompensatorWeights,
    mom: MomentSet,
    w: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial vacant-hypothesis fused mean and deviation.

    Patterns repeat heavily across trials, so statistics are computed once
    per unique switch pattern and scattered back.
    """
    pats, inv = np.unique(theta, axis=0, return_inverse=True)
    means, varis = pattern_scalar_stats(w, comp, mom, pats.astype(float))
    sd0 = np.sqrt(np.maximum(varis[0], 0.0))
    return means[0][inv], sd0[inv]


def run_batch(
    cfg: NetworkConfig,
    channels: Sequence[NodeChannel],
    sig: PuSignalModel,
    sched: BernoulliSchedule,
    comp: CompensatorWeights,
    rule: FusionRule | np.ndarray,
    *,
    hypothesis: str = "mixed",
    trials: int = 10_000,
    seed: int = 0,
    alpha: float | None = None,
    mom: MomentSet | None = None,
    independent_nodes: bool = False,
    summary_mode: str = "physics",
    chunk: int = DEFAULT_CHUNK,
) -> TrialBatch:
    """Simulate the full chain and record every trial.

    For each trial: draw the hypothesis (fixed or from the prior), realize
    the received waveforms and energy summaries, gate them through the
    Bernoulli switch pattern, add reporting noise, compensate, fuse, and
    threshold.  Passing a FusionRule applies its fixed threshold; passing a
    bare weight vector (or a rule plus explicit ``alpha``) adapts the
    threshold to each trial's switch pattern so the false-alarm rate stays
    at ``alpha`` (``cfg.alpha`` when omitted).  ``mom`` supplies the moment
    set the fusion center believes in -- pass a perturbed set to study
    imperfect channel knowledge; the physics always uses the true channels.

    ``summary_mode`` selects how the energy windows are realized:
    "physics" synthesizes waveforms and sums sample energies (the energy
    statistics then carry their true finite-sample skewness), while
    "gaussian" draws the windows from the analytic moment model directly,
    which checks the downstream report/threshold chain against its own
    distributional assumptions.
    """
    if len(channels) != cfg.K:
        raise ValueError(f"expected {cfg.K} channels, got {len(channels)}")
    if sched.n != cfg.n:
        raise ValueError("schedule dimension disagrees with the configuration")
    if comp.n != cfg.n or comp.K != cfg.K:
        raise ValueError("compensator dimensions disagree with the configuration")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if hypothesis not in ("h0", "h1", "mixed"):
        raise ValueError(f"unknown hypothesis mode: {hypothesis!r}")
    if summary_mode not in ("physics", "gaussian"):
        raise ValueError(f"unknown summary mode: {summary_mode!r}")

    if isinstance(rule, FusionRule):
        w = rule.w
        fixed_tau = None if alpha is not None else rule.tau
    else:
        w = np.asarray(rule, dtype=float)
        if w.shape != (cfg.K,):
            raise ValueError(f"fusion weights must have shape ({cfg.K},)")
        fixed_tau = None
    mom_true = None
    if summary_mode == "gaussian":
        mom_true = build_moments(cfg, channels, sig,
                                 independent_nodes=independent_nodes)
    if fixed_tau is None:
        alpha = cfg.alpha if alpha is None else float(alpha)
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if mom is None:
            mom = mom_true if mom_true is not None else build_moments(
                cfg, channels, sig, independent_nodes=independent_nodes)

    if hypothesis == "mixed":
        lab = _stream(seed, "hypothesis", 0, 0).random(trials)
        h = (lab < cfg.prior_h1).astype(np.int8)
    else:
        h = np.full(trials, 1 if hypothesis == "h1" else 0, dtype=np.int8)

    u = np.empty((trials, cfg.n))
    for hyp in (0, 1):
        idx = np.flatnonzero(h == hyp)
        if idx.size == 0:
            continue
        if summary_mode == "gaussian":
            u[idx] = _draw_summaries_gaussian(mom_true, hyp, idx.size, seed)
        else:
            u[idx] = _draw_summaries(cfg, channels, sig, hyp, idx.size, seed,
                                     independent_nodes, chunk)

    theta = (_stream(seed, "switch", 0, 0).random((trials, cfg.n))
             < sched.p[None, :]).astype(np.int8)
    z = math.sqrt(cfg.sigma_z2) * _stream(seed, "report", 0, 0).standard_normal(
        (trials, cfg.n))
    y_L = theta * u + z
    u_hat = compensate(comp, y_L)
    S = u_hat @ w

    if fixed_tau is not None:
        tau = np.full(trials, float(fixed_tau))
    else:
        mu0, sd0 = _pattern_threshold_pieces(theta, comp, mom, w)
        tau = mu0 + qfunc_inv(alpha) * sd0
    decision = S > tau

    return TrialBatch(seed=seed, hypothesis=hypothesis, h=h, u=u, theta=theta,
                      y_L=y_L, u_hat=u_hat, S=S, tau=tau, decision=decision)


@dataclass(frozen=True)
class CrocCurve:
    """Empirical complementary ROC with 99% binomial confidence half-widths."""

    alphas: np.ndarray   # (A,)
    pf: np.ndarray       # (A,) empirical false-alarm rate
    pmd: np.ndarray      # (A,) empirical missed-detection rate
    pf_ci: np.ndarray    # (A,)
    pmd_ci: np.ndarray   # (A,)
    trials: int
    seed: int

    def __post_init__(self):
        for name in ("alphas", "pf", "pmd", "pf_ci", "pmd_ci"):
            arr = getattr(self, name)
            if arr.shape != self.alphas.shape:
                raise ValueError(f"curve field {name!r} disagrees on grid size")
            arr.setflags(write=False)


def empirical_croc(
    cfg: NetworkConfig,
    channels: Sequence[NodeChannel],
    sig: PuSignalModel,
    sched: BernoulliSchedule,
    comp: CompensatorWeights,
    rule_w: np.ndarray,
    alphas: Sequence[float],
    *,
    trials: int = 10_000,
    seed: int = 0,
    mom: MomentSet | None = None,
    independent_nodes: bool = False,
    summary_mode: str = "physics",
    chunk: int = DEFAULT_CHUNK,
) -> CrocCurve:
    """Empirical (Pf, Pmd) across a false-alarm grid from two shared batches.

    One batch is simulated per hypothesis and reused for every alpha: the
    fused statistic and the per-pattern threshold pieces are fixed, so each
    alpha only moves the threshold multiplier.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or alphas.size == 0:
        raise ValueError("alphas must be a nonempty 1-d grid")
    if np.any(alphas <= 0.0) or np.any(alphas >= 1.0):
        raise ValueError("alphas must lie in (0, 1)")
    w = np.asarray(rule_w, dtype=float)
    if mom is None:
        mom = build_moments(cfg, channels, sig,
                            independent_nodes=independent_nodes)

    t0 = qfunc_inv(alphas)
    rates = []
    for hyp, sub_seed in (("h0", seed), ("h1", seed + 1)):
        batch = run_batch(cfg, channels, sig, sched, comp, w,
                          hypothesis=hyp, trials=trials, seed=sub_seed,
                          alpha=float(alphas[0]), mom=mom,
                          independent_nodes=independent_nodes,
                          summary_mode=summary_mode, chunk=chunk)
        mu0, sd0 = _pattern_threshold_pieces(batch.theta, comp, mom, w)
        hits = batch.S[None, :] > mu0[None, :] + t0[:, None] * sd0[None, :]
        rates.append(hits.mean(axis=1))
    pf = rates[0]
    pmd = 1.0 - rates[1]
    pf_ci = CI_Z99 * np.sqrt(np.maximum(pf * (1.0 - pf), 0.0) / trials)
    pmd_ci = CI_Z99 * np.sqrt(np.maximum(pmd * (1.0 - pmd), 0.0) / trials)
    return CrocCurve(alphas=alphas, pf=pf, pmd=pmd, pf_ci=pf_ci,
                     pmd_ci=pmd_ci, trials=trials, seed=seed)


@dataclass(frozen=True)
class CsiPerturbation:
    """Multiplicative Gaussian error applied to every estimated statistic.

    Each scalar parameter s becomes s * (1 + e) with e ~ N(0,
    ``normalized_var``) -- the error variance normalized by the squared
    parameter.  ``diagonal_only`` restricts the covariance perturbation to
    main diagonals (the independent-sensors setting; multiplicative noise
    already keeps exact zero cross-terms at zero).
    """

    normalized_var: float
    diagonal_only: bool = False

    def __post_init__(self):
        if self.normalized_var < 0.0:
            raise ValueError("normalized_var must be >= 0")


def _psd_project(A: np.ndarray) -> np.ndarray:
    """Nearest positive-semidefinite matrix: clip eigenvalues at zero."""
    S = symmetrize(A)
    vals, vecs = np.linalg.eigh(S)
    return symmetrize((vecs * np.maximum(vals, 0.0)) @ vecs.T)


def perturb_csi(mom: MomentSet, pert: CsiPerturbation, seed: int) -> MomentSet:
    """Moment set as estimated from imperfect channel knowledge.

    The conditional means, covariances and cross-covariances are jittered
    multiplicatively, covariances are re-symmetrized and projected back onto
    the positive-semidefinite cone, and every derived quantity
    (autocorrelations, prior mixtures) is rebuilt for internal consistency.
    """
    if pert.normalized_var == 0.0:
        return mom
    rng = np.random.default_rng(seed)
    sd = math.sqrt(pert.normalized_var)

    def jiggle(a: np.ndarray) -> np.ndarray:
        return a * (1.0 + sd * rng.standard_normal(a.shape))

    mu_h = jiggle(mom.mu_uL_h)
    C_h = np.empty_like(mom.C_uL_h)
    for h in (0, 1):
        if pert.diagonal_only:
            Ch = mom.C_uL_h[h].copy()
            d = np.einsum("ii->i", Ch)
            d[...] = jiggle(d)
        else:
            Ch = jiggle(mom.C_uL_h[h])
        C_h[h] = _psd_project(Ch)
    C_uLu_h = jiggle(mom.C_uLu_h)
    R_h = C_h + mu_h[:, :, None] * mu_h[:, None, :]

    pr1 = mom.prior_h1
    pr0 = 1.0 - pr1
    mu = pr0 * mu_h[0] + pr1 * mu_h[1]
    R = pr0 * R_h[0] + pr1 * R_h[1]
    C = pr0 * C_h[0] + pr1 * C_h[1]
    C_uLu = pr0 * C_uLu_h[0] + pr1 * C_uLu_h[1]
    if mom.total_cov:
        spread = mu_h[1] - mu_h[0]
        C = C + pr0 * pr1 * np.outer(spread, spread)
        lag0 = np.arange(mom.K) * (mom.L + 1)
        C_uLu = C_uLu + pr0 * pr1 * np.outer(spread, spread[lag0])

    return MomentSet(K=mom.K, L=mom.L, N=mom.N, prior_h1=pr1,
                     mu_uL_h=mu_h, R_uL_h=R_h, C_uL_h=C_h, C_uLu_h=C_uLu_h,
                     mu_uL=mu, R_uL=R, C_uL=C, C_uLu=C_uLu,
                     total_cov=mom.total_cov)


def error_probability(
    batch_h0: TrialBatch,
    batch_h1: TrialBatch,
    priors: tuple[float, float] = (0.5, 0.5),
) -> float:
    """Pe = Pr{vacant} Pf + Pr{occupied} (1 - Pd) from two pure batches."""
    if batch_h0.hypothesis != "h0" or batch_h1.hypothesis != "h1":
        raise ValueError("error_probability expects pure h0 and h1 batches")
    pr0, pr1 = float(priors[0]), float(priors[1])
    if pr0 < 0.0 or pr1 < 0.0 or not math.isclose(pr0 + pr1, 1.0, abs_tol=1e-9):
        raise ValueError("priors must be nonnegative and sum to 1")
    pf = batch_h0.false_alarm_rate
    pd = batch_h1.detection_rate
    return pr0 * pf + pr1 * (1.0 - pd)


def benchmark_pd_alpha(
    mom: MomentSet,
    sigma_z2: float,
    alpha: float,
    w: np.ndarray | None = None,
) -> float:
    """Detection probability of uninterrupted linear fusion at Pf = alpha.

    The reference receiver fuses the current-interval reports y = u + z
    directly (no gating, no compensation) with deflection-optimal weights
    unless ``w`` is given; the threshold pins the false-alarm rate exactly.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if w is None:
        w = benchmark_weights(mom, sigma_z2, kind="optimal")
    w = np.asarray(w, dtype=float)
    lag0 = np.arange(mom.K) * (mom.L + 1)
    var = np.empty(2)
    for h in (0, 1):
        C = mom.C_uL_h[h][np.ix_(lag0, lag0)] + sigma_z2 * np.eye(mom.K)
        var[h] = w @ C @ w
    shift = float(w @ (mom.mu_u_h(1) - mom.mu_u_h(0)))
    t0 = qfunc_inv(alpha)
    return float(qfunc((t0 * math.sqrt(max(var[0], 0.0)) - shift)
                       / math.sqrt(max(var[1], 1e-300))))


def dispersion_snrs(snr0_db: float, delta_db: float, K: int = 3) -> np.ndarray:
    """Three-level SNR layout {snr0 + d, snr0, snr0 - d} tiled over K nodes."""
    if K % 3 != 0:
        raise ValueError("node count must be a multiple of 3 for the "
                         "three-level dispersion layout")
    levels = np.array([snr0_db + delta_db, snr0_db, snr0_db - delta_db])
    return np.repeat(levels, K // 3)


# A Pmd method maps (cfg, snr0_db, alpha) to a missed-detection probability.
PmdMethod = Callable[[NetworkConfig, float, float], float]


def make_pmd_method(
    kind: str = "interrupted",
    *,
    delta_db: float = 0.0,
    rho: float = 0.1,
    rho_snr_db: float = 5.0,
    sig: PuSignalModel | None = None,
    eta: float | None = None,
    sched_source: str = "uniform",
    n_radii: int = 16,
    refine_iters: int = 3,
) -> PmdMethod:
    """Analytic missed-detection probability as a function of average SNR.

    Returns a callable (cfg, snr0_db, alpha) -> Pmd.  ``kind``
    "interrupted" evaluates the compensated interrupted system under the
    pattern-adaptive CFAR policy with the schedule chosen by
    ``sched_source`` ("uniform" spreads the power budget evenly; "dc-sdp"
    optimizes the deflection criterion); "benchmark" evaluates
    uninterrupted optimal linear fusion.  The efficiency level defaults to
    ``cfg.eta``.

    The primary-user waveform shape stays fixed while the SNR search moves
    the channel gains: unless ``sig`` is given, the moving-average weight
    is calibrated once so a reference node at ``rho_snr_db`` sees lag-1
    summary correlation ``rho``.
    """
    if kind not in ("interrupted", "benchmark"):
        raise ValueError(f"unknown method kind: {kind!r}")
    if sched_source not in ("uniform", "dc-sdp"):
        raise ValueError(f"unknown schedule source: {sched_source!r}")
    sig_cache: dict[int, PuSignalModel] = {}

    def method(cfg: NetworkConfig, snr0_db: float, alpha: float) -> float:
        snrs = dispersion_snrs(snr0_db, delta_db, cfg.K)
        channels = [NodeChannel.from_snr_db(s) for s in snrs]
        if sig is not None:
            sig_n = sig
        elif cfg.N in sig_cache:
            sig_n = sig_cache[cfg.N]
        else:
            sig_n = calibrate_ma_weight(NodeChannel.from_snr_db(rho_snr_db),
                                        1.0, cfg.N, rho)
            sig_cache[cfg.N] = sig_n
        mom = build_moments(cfg, channels, sig_n)
        w = benchmark_weights(mom, cfg.sigma_z2, kind="optimal")
        if kind == "benchmark":
            return 1.0 - benchmark_pd_alpha(mom, cfg.sigma_z2, alpha, w=w)
        level = cfg.eta if eta is None else float(eta)
        if sched_source == "dc-sdp" and level > 0.0:
            prog = dc_matrices(mom, w)
            sweep = solve_dc_sweep(prog, level, n_radii=n_radii,
                                   refine_iters=refine_iters)
            sched = BernoulliSchedule(p=sweep.p)
        else:
            sched = BernoulliSchedule.uniform(min(1.0, 1.0 - level), cfg.n)
        rep = report_covariance(mom, sched, cfg.sigma_z2)
        comp = fit(mom, rep)
        return 1.0 - pd_alpha_overall(sched, w, comp, mom, alpha)

    return method


def required_snr(
    pmd_fn: Callable[[float], float],
    target_pmd: float,
    bracket: tuple[float, float] = (-15.0, 30.0),
    tol_db: float = 1e-3,
    max_iter: int = 80,
) -> float:
    """Smallest SNR (dB) meeting a missed-detection target, by bisection.

    ``pmd_fn`` must be nonincreasing in SNR across the bracket.
    """
    if not 0.0 < target_pmd < 1.0:
        raise ValueError("target_pmd must lie in (0, 1)")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must satisfy lo < hi")
    f_lo = pmd_fn(lo)
    f_hi = pmd_fn(hi)
    if not f_lo >= target_pmd >= f_hi:
        raise ValueError(
            f"SNR bracket [{lo:g}, {hi:g}] dB does not enclose the "
            f"missed-detection target {target_pmd:g}: endpoint values "
            f"({f_lo:.4g}, {f_hi:.4g})")
    for _ in range(max_iter):
        if hi - lo <= tol_db:
            break
        mid = 0.5 * (lo + hi)
        if pmd_fn(mid) > target_pmd:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def snr_loss(
    cfg: NetworkConfig,
    target_pmd: float,
    alpha: float,
    method_a: PmdMethod,
    method_b: PmdMethod,
    *,
    bracket: tuple[float, float] = (-15.0, 30.0),
    tol_db: float = 1e-3,
) -> float:
    """Extra SNR (dB) method_a needs over method_b at matched (alpha, Pmd)."""
    snr_a = required_snr(lambda s: method_a(cfg, s, alpha), target_pmd,
                         bracket=bracket, tol_db=tol_db)
    snr_b = required_snr(lambda s: method_b(cfg, s, alpha), target_pmd,
                         bracket=bracket, tol_db=tol_db)
    return snr_a - snr_b
