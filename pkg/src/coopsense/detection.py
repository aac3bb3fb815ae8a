"""Fusion statistics and detection probabilities.

The fusion center combines the reconstructed summaries with a linear rule
S = w'u_hat and decides the channel occupied when S exceeds a threshold.
Because the switch pattern b makes u_hat conditionally Gaussian, every
probability of interest is a Q-function of the conditional mean/variance,
and overall rates are mixtures over the 2^n switch patterns.

Threshold policy: the false-alarm rate is held at a target alpha by adapting
the threshold to the realized switch pattern (the receiver observes which
reports arrived), tau(b) = Q^{-1}(alpha) sqrt(w'C0b w) + w'mu0b.

The module also exposes the surrogate objective pieces (q_b, Sigma_hb) that
express the conditional detection probability as an explicit function of the
forwarding probabilities, and the deflection coefficient used by the
low-complexity optimizer.  Both assume summaries rescaled to unit
reporting-noise power.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import erfc, erfcinv

from .compensator import (
    CompensatorWeights,
    EstimateStats,
    conditional_stats,
    estimate_cov_unconditional,
    mean_shift_exact,
    mean_shift_unconditional,
)
from .model import BernoulliSchedule, realization_masses, realization_table
from .moments import MomentSet, ReportMoments, symmetrize

__all__ = [
    "FusionRule",
    "DetectionReport",
    "NpPieces",
    "qfunc",
    "qfunc_inv",
    "fuse",
    "benchmark_weights",
    "pattern_scalar_stats",
    "conditional_probs",
    "overall_probs",
    "cfar_threshold",
    "pd_alpha_conditional",
    "pd_alpha_overall",
    "np_pieces",
    "deflection",
    "mixture_logpdf",
    "mixture_pdf",
    "lrt",
    "detection_report",
]

ENUM_CAP = 20
Q_NEG_TOL = 1e-9


def qfunc(x) -> np.ndarray | float:
    """Standard Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(x / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def qfunc_inv(p) -> np.ndarray | float:
    """Inverse of the Gaussian tail: x with Q(x) = p, for p in (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("tail probability must lie strictly in (0, 1)")
    out = math.sqrt(2.0) * erfcinv(2.0 * p_arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FusionRule:
    """Linear fusion rule: statistic S = w'u_hat compared against tau."""

    w: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if not np.all(np.isfinite(w)) or not np.any(w != 0.0):
            raise ValueError("fusion weights must be finite with a nonzero entry")
        object.__setattr__(self, "w", w)

    @property
    def K(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class DetectionReport:
    """Headline operating figures of a configured detector."""

    pf: float
    pd: float
    pd_alpha: float
    deflection: float


@dataclass(frozen=True)
class NpPieces:
    """Surrogate objective pieces for one switch pattern (unit-noise units).

    q_b'p approximates the fused mean separation and p'Sigma_hb p the fused
    conditional variance, both as explicit functions of the forwarding
    probabilities p.
    """

    q_b: np.ndarray       # (n,)
    sigma0: np.ndarray    # (n, n), vacant-channel piece
    sigma1: np.ndarray    # (n, n), occupied-channel piece


def fuse(rule: FusionRule, u_hat: np.ndarray) -> tuple[np.ndarray | float, np.ndarray | bool]:
    """Fused statistic and decision; ties (S == tau) decide the vacant channel."""
    u = np.asarray(u_hat, dtype=float)
    if u.shape[-1] != rule.K:
        raise ValueError(f"estimate has length {u.shape[-1]}, expected {rule.K}")
    S = u @ rule.w
    dec = S > rule.tau
    if S.ndim == 0:
        return float(S), bool(dec)
    return S, dec


def benchmark_weights(
    mom: MomentSet, sigma_z2: float, kind: str = "optimal"
) -> np.ndarray:
    """Reference fusion weights for the uninterrupted (p = 1) system.

    "optimal" maximizes the deflection of the always-forwarding system
    (w proportional to C0^{-1} a at p = 1); "equal" returns the all-ones
    vector.  Both are normalized to unit Euclidean length.
    """
    if kind == "equal":
        return np.ones(mom.K) / math.sqrt(mom.K)
    if kind != "optimal":
        raise ValueError(f"unknown weight kind: {kind!r}")
    from .compensator import fit
    from .moments import report_covariance

    sched = BernoulliSchedule.uniform(1.0, mom.n)
    rep = report_covariance(mom, sched, sigma_z2)
    comp = fit(mom, rep)
    a = mean_shift_unconditional(comp, mom, sched)
    C0 = estimate_cov_unconditional(comp, mom, rep, 0)
    w = np.linalg.solve(C0 + 1e-12 * np.trace(C0) / mom.K * np.eye(mom.K), a)
    nrm = np.linalg.norm(w)
    if nrm == 0.0:
        raise ValueError("degenerate benchmark weights (zero mean separation)")
    return w / nrm


def pattern_scalar_stats(
    w: np.ndarray,
    comp: CompensatorWeights,
    mom: MomentSet,
    B: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Fused mean and variance of S = w'u_hat for a batch of switch patterns.

    For v = Xi w the fused statistic is S = v'(b o u_L) + v'z + w'eps, linear
    in b for the mean and quadratic for the variance, which lets a whole
    (m, n) pattern batch be evaluated with two matrix products per hypothesis.

    Returns (means, variances), each of shape (2, m) indexed by hypothesis.
    """
    v = comp.xi @ w
    B = np.atleast_2d(np.asarray(B, dtype=float))
    base = float(w @ comp.eps)
    noise = comp.sigma_z2 * float(v @ v)
    means = np.empty((2, B.shape[0]))
    varis = np.empty((2, B.shape[0]))
    for h in (0, 1):
        means[h] = B @ (v * mom.mu_uL_h[h]) + base
        M = (v[:, None] * mom.C_uL_h[h] * v[None, :])
        varis[h] = np.einsum("bi,ij,bj->b", B, M, B) + noise
    return means, varis


def conditional_probs(rule: FusionRule, stats: EstimateStats) -> tuple[float, float]:
    """(Pf, Pd) for a fixed switch pattern at the rule's own threshold."""
    w = rule.w
    out = []
    for h in (0, 1):
        mu = float(w @ stats.mu_hat_h_b[h])
        var = float(w @ stats.C_hat_h_b[h] @ w)
        if var <= 0.0:
            warnings.warn("degenerate zero-variance fused statistic; "
                          "step-function probability returned")
            out.append(1.0 if mu > rule.tau else 0.0)
        else:
            out.append(qfunc((rule.tau - mu) / math.sqrt(var)))
    return out[0], out[1]


def overall_probs(
    rule: FusionRule,
    sched: BernoulliSchedule,
    comp: CompensatorWeights,
    mom: MomentSet,
) -> tuple[float, float]:
    """(Pf, Pd) averaged over switch patterns at a fixed threshold."""
    n = mom.n
    if n > ENUM_CAP:
        raise ValueError(f"pattern enumeration limited to n <= {ENUM_CAP}, got {n}")
    B = realization_table(n)
    mass = realization_masses(sched, B)
    means, varis = pattern_scalar_stats(rule.w, comp, mom, B)
    sd = np.sqrt(varis)
    pf = float(mass @ qfunc((rule.tau - means[0]) / sd[0]))
    pd = float(mass @ qfunc((rule.tau - means[1]) / sd[1]))
    return pf, pd


def cfar_threshold(rule_w: np.ndarray, stats: EstimateStats, alpha: float) -> float:
    """Pattern-adaptive threshold holding the false-alarm rate at alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    w = np.asarray(rule_w, dtype=float)
    mu0 = float(w @ stats.mu_hat_h_b[0])
    var0 = float(w @ stats.C_hat_h_b[0] @ w)
    return qfunc_inv(alpha) * math.sqrt(max(var0, 0.0)) + mu0


def pd_alpha_conditional(
    rule_w: np.ndarray,
    stats: EstimateStats | None,
    alpha: float,
    mode: str = "exact",
    pieces: NpPieces | None = None,
    p: np.ndarray | None = None,
) -> float:
    """Detection probability for one switch pattern with Pf pinned at alpha.

    exact mode uses the conditional estimate statistics; approx mode uses the
    surrogate pieces evaluated at forwarding probabilities p (unit-noise
    convention), the form the optimizer maximizes.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    t0 = qfunc_inv(alpha)
    if mode == "exact":
        if stats is None:
            raise ValueError("exact mode requires estimate statistics")
        w = np.asarray(rule_w, dtype=float)
        var0 = float(w @ stats.C_hat_h_b[0] @ w)
        var1 = float(w @ stats.C_hat_h_b[1] @ w)
        shift = float(stats.a_b @ w)
        if var1 <= 0.0:
            return 1.0 if shift > t0 * math.sqrt(max(var0, 0.0)) else 0.0
        return qfunc((t0 * math.sqrt(max(var0, 0.0)) - shift) / math.sqrt(var1))
    if mode == "approx":
        if pieces is None or p is None:
            raise ValueError("approx mode requires surrogate pieces and p")
        pv = np.asarray(p, dtype=float)
        s0 = float(pv @ pieces.sigma0 @ pv)
        s1 = float(pv @ pieces.sigma1 @ pv)
        num = t0 * math.sqrt(max(s0, 0.0)) - float(pieces.q_b @ pv)
        if s1 <= 0.0:
            return 1.0 if num < 0 else 0.0
        return qfunc(num / math.sqrt(s1))
    raise ValueError(f"unknown mode: {mode!r}")


def pd_alpha_overall(
    sched: BernoulliSchedule,
    rule_w: np.ndarray,
    comp: CompensatorWeights,
    mom: MomentSet,
    alpha: float,
) -> float:
    """Pattern-averaged detection probability under the CFAR threshold policy."""
    n = mom.n
    if n > ENUM_CAP:
        raise ValueError(f"pattern enumeration limited to n <= {ENUM_CAP}, got {n}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    w = np.asarray(rule_w, dtype=float)
    B = realization_table(n)
    mass = realization_masses(sched, B)
    means, varis = pattern_scalar_stats(w, comp, mom, B)
    t0 = qfunc_inv(alpha)
    sd0 = np.sqrt(np.maximum(varis[0], 0.0))
    sd1 = np.sqrt(np.maximum(varis[1], 1e-300))
    shift = means[1] - means[0]
    return float(mass @ qfunc((t0 * sd0 - shift) / sd1))


def np_pieces(rule_w: np.ndarray, mom: MomentSet, b: np.ndarray) -> NpPieces:
    """Surrogate objective pieces for one switch pattern.

    Expects unit-reporting-noise moments (rescale with
    moments.normalize_unit_report_noise first).  The separation vector is
    q_b = (C_uLu w) o (b o delta_mu) and the quadratic pieces are
    Sigma_hb = (B C_uL|h B + I) o (vv') with v = C_uLu w; nonnegativity of
    q_b and positive semidefiniteness of Sigma are model-level claims that
    are verified on construction.
    """
    w = np.asarray(rule_w, dtype=float)
    bv = np.asarray(b, dtype=float)
    if bv.shape != (mom.n,):
        raise ValueError(f"switch pattern must have shape ({mom.n},)")
    v = mom.C_uLu @ w
    q = v * (bv * mom.delta_mu)
    scale = max(np.abs(q).max(), 1.0)
    if q.min() < -Q_NEG_TOL * scale:
        raise ValueError(
            "negative separation component beyond tolerance — the surrogate "
            f"assumes nonnegative q (min entry {q.min():.3e}); check weights "
            "and moment signs"
        )
    vv = np.outer(v, v)
    sig = []
    for h in (0, 1):
        inner = bv[:, None] * mom.C_uL_h[h] * bv[None, :]
        inner[np.diag_indices(mom.n)] += 1.0
        sig.append(symmetrize(inner * vv))
    return NpPieces(q_b=q, sigma0=sig[0], sigma1=sig[1])


def deflection(
    rule_w: np.ndarray,
    sched: BernoulliSchedule,
    comp: CompensatorWeights,
    mom: MomentSet,
    rep: ReportMoments,
    mode: str = "h0",
    approx: bool = False,
) -> float:
    """Variance-normalized separation of the fused statistic's two centers.

    mode "h0" normalizes by the vacant-channel variance (the classical
    definition); mode "h1" uses the occupied-channel variance (the variant
    the low-complexity optimizer maximizes).
    """
    if mode not in ("h0", "h1"):
        raise ValueError(f"unknown mode: {mode!r}")
    w = np.asarray(rule_w, dtype=float)
    a = mean_shift_unconditional(comp, mom, sched, approx=approx)
    h = 0 if mode == "h0" else 1
    C = estimate_cov_unconditional(comp, mom, rep, h, approx=approx)
    var = float(w @ C @ w)
    if var <= 0.0:
        raise ValueError("nonpositive fused variance")
    return float(a @ w) / math.sqrt(var)


def _pattern_gaussians(
    sched: BernoulliSchedule,
    comp: CompensatorWeights,
    mom: MomentSet,
    h: int,
    ridge_warned: list | None = None,
):
    """Means, Cholesky factors, and log-weights of the u_hat mixture under h."""
    n = mom.n
    if n > ENUM_CAP:
        raise ValueError(f"pattern enumeration limited to n <= {ENUM_CAP}, got {n}")
    B = realization_table(n)
    mass = realization_masses(sched, B)
    keep = mass > 0.0
    B, mass = B[keep], mass[keep]
    K = mom.K
    mus = np.empty((B.shape[0], K))
    covs = np.empty((B.shape[0], K, K))
    for i, b in enumerate(B):
        mus[i], covs[i] = conditional_stats(comp, mom, b, h)
    try:
        chol = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        lam = 1e-9 * np.trace(covs, axis1=1, axis2=2).max()
        warnings.warn("singular mixture component covariance; ridge applied")
        covs = covs + lam * np.eye(K)
        chol = np.linalg.cholesky(covs)
    logw = np.log(mass)
    return mus, chol, logw


def mixture_logpdf(
    u_hat: np.ndarray,
    h: int,
    sched: BernoulliSchedule,
    comp: CompensatorWeights,
    mom: MomentSet,
) -> np.ndarray | float:
    """Log-density of u_hat under hypothesis h (Gaussian mixture over patterns).

    Accepts a single point (K,) or a batch (m, K); evaluation is done in the
    log domain with a log-sum-exp reduction over the 2^n components.
    """
    x = np.atleast_2d(np.asarray(u_hat, dtype=float))
    mus, chol, logw = _pattern_gaussians(sched, comp, mom, h)
    K = mom.K
    # solves L d = (x - mu) for every (component, point) pair
    diff = x[None, :, :] - mus[:, None, :]            # (c, m, K)
    logdet = np.log(np.einsum("cii->ci", chol)).sum(axis=1)   # (c,)
    quads = np.empty((mus.shape[0], x.shape[0]))
    for i in range(mus.shape[0]):
        sol = solve_triangular(chol[i], diff[i].T, lower=True)
        quads[i] = (sol ** 2).sum(axis=0)
    logcomp = (logw[:, None] - 0.5 * quads - logdet[:, None]
               - 0.5 * K * math.log(2.0 * math.pi))
    m = logcomp.max(axis=0)
    out = m + np.log(np.exp(logcomp - m).sum(axis=0))
    return float(out[0]) if np.asarray(u_hat).ndim == 1 else out


def mixture_pdf(u_hat, h, sched, comp, mom):
    """Density of u_hat under hypothesis h; see mixture_logpdf."""
    return np.exp(mixture_logpdf(u_hat, h, sched, comp, mom))


def lrt(
    u_hat: np.ndarray,
    sched: BernoulliSchedule,
    comp: CompensatorWeights,
    mom: MomentSet,
    tau_lambda: float = 1.0,
) -> tuple[np.ndarray | float, np.ndarray | bool]:
    """Likelihood ratio of the two mixture laws and its threshold decision.

    Computed in the log domain; the returned ratio may overflow to inf for
    extreme inputs but the decision is always well-defined.
    """
    if tau_lambda <= 0.0:
        raise ValueError("tau_lambda must be positive")
    l1 = mixture_logpdf(u_hat, 1, sched, comp, mom)
    l0 = mixture_logpdf(u_hat, 0, sched, comp, mom)
    loglam = np.asarray(l1) - np.asarray(l0)
    with np.errstate(over="ignore"):
        lam = np.exp(loglam)
    dec = loglam > math.log(tau_lambda)
    if np.asarray(u_hat).ndim == 1:
        return float(lam), bool(dec)
    return lam, dec


def detection_report(
    rule: FusionRule,
    sched: BernoulliSchedule,
    comp: CompensatorWeights,
    mom: MomentSet,
    rep: ReportMoments,
    alpha: float,
) -> DetectionReport:
    """Operating summary: fixed-threshold rates, CFAR Pd, and deflection."""
    pf, pd = overall_probs(rule, sched, comp, mom)
    pda = pd_alpha_overall(sched, rule.w, comp, mom, alpha)
    dm = deflection(rule.w, sched, comp, mom, rep)
    return DetectionReport(pf=pf, pd=pd, pd_alpha=pda, deflection=dm)
