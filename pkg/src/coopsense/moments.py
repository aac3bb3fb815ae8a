"""First/second-order statistics of the stacked local sensing summaries.

Each node's local summary over one decision interval is an energy sum
u_k(m) = sum_{i=0}^{N-1} |x_k(Nm - i)|^2 with x_k = h_k s + nu_k under the
occupied hypothesis and x_k = nu_k otherwise.  This module turns channel and
signal statistics into the mean vector, autocorrelation, and covariance of
the stacked window u_L (node-major, lag-minor flat order) plus the
cross-covariance with the current-interval summaries, and assembles the
received-report covariances for a given interruption schedule.

Conventions:
- hypothesis index h: 0 = vacant channel, 1 = occupied.
- all nodes share one receiver noise power (enforced).
- the PU signal is common to all nodes unless ``independent_nodes`` is set,
  in which case cross-node fourth moments factor (diagonal spatial model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .model import BernoulliSchedule, NetworkConfig, NodeChannel, PuSignalModel, unflatten

__all__ = [
    "MomentSet",
    "ReportMoments",
    "local_mean",
    "local_autocorr",
    "build_moments",
    "report_covariance",
    "calibrate_ma_weight",
    "u_lag_correlation",
    "normalize_unit_report_noise",
    "symmetrize",
    "assert_psd",
]

PSD_TOL = 1e-9


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def assert_psd(A: np.ndarray, name: str = "matrix", tol: float = PSD_TOL) -> None:
    """Raise if the (symmetrized) matrix has an eigenvalue below -tol*scale."""
    S = symmetrize(np.asarray(A, dtype=float))
    scale = max(np.trace(S), np.abs(S).max(), 1.0)
    w = np.linalg.eigvalsh(S)
    if w.min() < -tol * scale:
        raise ValueError(
            f"{name} is not PSD within tolerance: min eigenvalue {w.min():.3e} "
            f"(scale {scale:.3e})"
        )


def local_mean(channel: NodeChannel, sig: PuSignalModel, N: int, h: int) -> float:
    """Mean of one local summary: N*(E[g]*E[|s|^2] + sigma_nu^2) under H1."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if h not in (0, 1):
        raise ValueError("h must be 0 or 1")
    if h == 0:
        return N * channel.noise_var
    return N * (channel.gain_mean * sig.power + channel.noise_var)


def _lag_weights(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample-lag offsets delta in [-(N-1), N-1] and their pair counts N-|delta|."""
    delta = np.arange(-(N - 1), N)
    return delta, N - np.abs(delta)


def local_autocorr(
    k: int,
    n_: int,
    l: int,
    r: int,
    channels: Sequence[NodeChannel],
    sig: PuSignalModel,
    N: int,
    include_beat_term: bool = True,
    independent_nodes: bool = False,
) -> float:
    """One autocorrelation entry E[u_k(m-l) u_n'(m-r)] under H1.

    Evaluates the double sample sum in collapsed form: offsets i'-j' = delta
    occur N-|delta| times, so the signal part is
    E[g_k g_n'] * sum_delta (N-|delta|) R_{|s|^2}(N(l-r)+delta).
    The noise fourth moment contributes sigma_nu^4 (N^2 + N) on matched
    (node, lag) pairs and sigma_nu^4 N^2 otherwise.  The signal-noise beat
    term 2 E[g_k] E[|s|^2] sigma_nu^2 fires on the same matched pairs; it is
    required for the analytic variance to equal the simulated one and can be
    disabled to reproduce the reduced grouping (see decisions ledger).

    Indices k, n' are 1-based node labels; l, r are window lags.
    """
    ch_k, ch_n = channels[k - 1], channels[n_ - 1]
    if not math.isclose(ch_k.noise_var, ch_n.noise_var, rel_tol=1e-12):
        raise ValueError("receiver noise powers must be equal across nodes")
    nu2 = ch_k.noise_var
    s2 = sig.power

    same_node = k == n_
    same_slot = same_node and l == r

    delta, counts = _lag_weights(N)

    if same_node:
        egg = ch_k.gain_mean * ch_n.gain_mean + ch_k.gain_var
    else:
        egg = ch_k.gain_mean * ch_n.gain_mean

    if independent_nodes and not same_node:
        # independent PU draws per node: fourth moment factors into means
        sig_part = egg * (N * N) * (s2 * s2)
    else:
        taus = N * (l - r) + delta
        rsq = np.array([sig.sq_corr(int(t)) for t in taus])
        sig_part = egg * float(counts @ rsq)

    cross_part = N * N * nu2 * s2 * (ch_k.gain_mean + ch_n.gain_mean)
    noise_part = nu2 * nu2 * (N * N + (N if same_slot else 0))
    beat_part = 2.0 * nu2 * s2 * ch_k.gain_mean * N if (include_beat_term and same_slot) else 0.0
    return sig_part + cross_part + noise_part + beat_part


@dataclass(frozen=True)
class MomentSet:
    """All first/second-order statistics of u_L and the current u.

    Arrays are stacked along a leading hypothesis axis (index 0 = vacant,
    1 = occupied).  Unconditional quantities are prior mixtures; covariances
    mix element-wise by default, with the between-hypothesis mean-spread term
    added only when ``total_cov`` was requested at build time.
    """

    K: int
    L: int
    N: int
    prior_h1: float
    mu_uL_h: np.ndarray    # (2, n)
    R_uL_h: np.ndarray     # (2, n, n)
    C_uL_h: np.ndarray     # (2, n, n)
    C_uLu_h: np.ndarray    # (2, n, K)
    mu_uL: np.ndarray      # (n,)
    R_uL: np.ndarray       # (n, n)
    C_uL: np.ndarray       # (n, n)
    C_uLu: np.ndarray      # (n, K)
    total_cov: bool = False

    @property
    def n(self) -> int:
        return self.K * (self.L + 1)

    @property
    def prior_h0(self) -> float:
        return 1.0 - self.prior_h1

    def mu_u_h(self, h: int) -> np.ndarray:
        """Mean of the current-interval summaries (lag-0 entries) under H_h."""
        idx = self._lag0_idx()
        return self.mu_uL_h[h, idx]

    @property
    def mu_u(self) -> np.ndarray:
        return self.mu_uL[self._lag0_idx()]

    def _lag0_idx(self) -> np.ndarray:
        return np.arange(self.K) * (self.L + 1)

    def Rdiag_uL_h(self, h: int) -> np.ndarray:
        """Diagonal matrix of the conditional autocorrelation main diagonal."""
        return np.diag(np.diag(self.R_uL_h[h]))

    @property
    def Rdiag_uL(self) -> np.ndarray:
        return np.diag(np.diag(self.R_uL))

    @property
    def delta_mu(self) -> np.ndarray:
        """Mean separation E[u_L|occupied] - E[u_L|vacant]."""
        return self.mu_uL_h[1] - self.mu_uL_h[0]


def build_moments(
    cfg: NetworkConfig,
    channels: Sequence[NodeChannel],
    sig: PuSignalModel,
    include_beat_term: bool = True,
    independent_nodes: bool = False,
    total_cov: bool = False,
) -> MomentSet:
    """Assemble the full MomentSet for a network configuration.

    Args:
        cfg: network dimensions and priors.
        channels: one NodeChannel per node (len == cfg.K).
        sig: PU signal statistics (H0 uses a zero-power copy).
        include_beat_term: keep the signal-noise beat term (default; see ledger).
        independent_nodes: factor cross-node fourth moments (diagonal spatial
            model for nodes with independent local outcomes).
        total_cov: add the between-hypothesis mean-spread term to the
            unconditional covariances (law of total covariance) instead of the
            plain prior mixture.

    Raises:
        ValueError: inconsistent dimensions, unequal noise powers, or a
            non-PSD assembled covariance (numerical-consistency error).
    """
    if len(channels) != cfg.K:
        raise ValueError(f"expected {cfg.K} channels, got {len(channels)}")
    n = cfg.n
    width = cfg.L + 1
    sig0 = PuSignalModel(power=0.0, ma_window=sig.ma_window, ma_weight=sig.ma_weight)

    nodes = np.empty(n, dtype=int)
    lags = np.empty(n, dtype=int)
    for i in range(1, n + 1):
        k, l = unflatten(i, cfg)
        nodes[i - 1], lags[i - 1] = k, l

    mu_h = np.zeros((2, n))
    R_h = np.zeros((2, n, n))
    C_uLu_h = np.zeros((2, n, cfg.K))

    for h, s_model in ((0, sig0), (1, sig)):
        for i in range(n):
            mu_h[h, i] = local_mean(channels[nodes[i] - 1], s_model, cfg.N, h)
        for i in range(n):
            for j in range(i, n):
                val = local_autocorr(
                    nodes[i], nodes[j], lags[i], lags[j], channels, s_model, cfg.N,
                    include_beat_term=include_beat_term,
                    independent_nodes=independent_nodes,
                )
                R_h[h, i, j] = val
                R_h[h, j, i] = val
        # cross-covariance with the current-interval summaries (lag 0)
        for i in range(n):
            for j in range(cfg.K):
                r_ij = local_autocorr(
                    nodes[i], j + 1, lags[i], 0, channels, s_model, cfg.N,
                    include_beat_term=include_beat_term,
                    independent_nodes=independent_nodes,
                )
                mu_j = local_mean(channels[j], s_model, cfg.N, h)
                C_uLu_h[h, i, j] = r_ij - mu_h[h, i] * mu_j

    C_h = np.zeros_like(R_h)
    for h in (0, 1):
        C_h[h] = symmetrize(R_h[h] - np.outer(mu_h[h], mu_h[h]))
        assert_psd(C_h[h], name=f"C_uL under h={h}")

    pr1 = cfg.prior_h1
    pr0 = 1.0 - pr1
    mu = pr0 * mu_h[0] + pr1 * mu_h[1]
    R = pr0 * R_h[0] + pr1 * R_h[1]
    C = pr0 * C_h[0] + pr1 * C_h[1]
    C_uLu = pr0 * C_uLu_h[0] + pr1 * C_uLu_h[1]
    if total_cov:
        # law of total covariance: add the between-hypothesis mean spread
        spread = mu_h[1] - mu_h[0]
        C = C + pr0 * pr1 * np.outer(spread, spread)
        lag0 = np.arange(cfg.K) * width
        C_uLu = C_uLu + pr0 * pr1 * np.outer(spread, spread[lag0])
    assert_psd(C, name="unconditional C_uL")

    return MomentSet(
        K=cfg.K, L=cfg.L, N=cfg.N, prior_h1=pr1,
        mu_uL_h=mu_h, R_uL_h=R_h, C_uL_h=C_h, C_uLu_h=C_uLu_h,
        mu_uL=mu, R_uL=R, C_uL=C, C_uLu=C_uLu, total_cov=total_cov,
    )


@dataclass(frozen=True)
class ReportMoments:
    """Second-order statistics of the received report window y_L.

    y_L = Theta u_L + z with independent Bernoulli switches Theta and white
    reporting noise of power sigma_z2, so for P = diag(p):

        C_yL|h = P(I-P) Rdiag_h + P C_uL|h P + sigma_z2 I
        C_yLu  = P C_uLu
        mu_yL|h = P mu_uL|h
    """

    sigma_z2: float
    p: np.ndarray          # (n,)
    C_yL_h: np.ndarray     # (2, n, n)
    C_yL: np.ndarray       # (n, n)
    C_yLu: np.ndarray      # (n, K)
    mu_yL_h: np.ndarray    # (2, n)
    mu_yL: np.ndarray      # (n,)

    @property
    def n(self) -> int:
        return self.p.size


def report_covariance(
    mom: MomentSet, sched: BernoulliSchedule, sigma_z2: float
) -> ReportMoments:
    """Assemble received-report covariances for an interruption schedule."""
    n = mom.n
    if sched.n != n:
        raise ValueError(f"schedule length {sched.n} does not match window {n}")
    if not sigma_z2 > 0:
        raise ValueError("sigma_z2 must be > 0")
    p = sched.p
    pq = p * (1.0 - p)

    def assemble(C: np.ndarray, rdiag: np.ndarray) -> np.ndarray:
        out = np.diag(pq * rdiag) + (p[:, None] * C * p[None, :])
        out[np.diag_indices(n)] += sigma_z2
        return symmetrize(out)

    C_yL_h = np.stack([
        assemble(mom.C_uL_h[h], np.diag(mom.R_uL_h[h])) for h in (0, 1)
    ])
    C_yL = assemble(mom.C_uL, np.diag(mom.R_uL))
    C_yLu = p[:, None] * mom.C_uLu
    mu_yL_h = p[None, :] * mom.mu_uL_h
    mu_yL = p * mom.mu_uL

    for h in (0, 1):
        assert_psd(C_yL_h[h] - sigma_z2 * np.eye(n), name=f"C_yL - sigma_z2 I under h={h}")

    return ReportMoments(
        sigma_z2=float(sigma_z2), p=p.copy(), C_yL_h=C_yL_h, C_yL=C_yL,
        C_yLu=C_yLu, mu_yL_h=mu_yL_h, mu_yL=mu_yL,
    )


def u_lag_correlation(
    channel: NodeChannel, sig: PuSignalModel, N: int, lag: int = 1
) -> float:
    """Temporal correlation of one node's summaries at the given window lag, under H1."""
    chs = [channel]
    r0 = local_autocorr(1, 1, 0, 0, chs, sig, N)
    rl = local_autocorr(1, 1, 0, lag, chs, sig, N)
    m = local_mean(channel, sig, N, 1)
    var = r0 - m * m
    cov = rl - m * m
    return cov / var


def calibrate_ma_weight(
    channel: NodeChannel,
    power: float,
    N: int,
    rho_target: float,
    ma_window: int | None = None,
    tol: float = 1e-10,
) -> PuSignalModel:
    """Choose the moving-average tap weight hitting a lag-1 summary correlation.

    Bisects the trailing-tap weight in [0, 1] (window defaults to 2N) until
    the lag-1 temporal correlation of u under H1 at the reference channel
    equals ``rho_target``.  Raises ValueError when the target is unreachable
    at the given window/SNR (correlation is capped by the signal's share of
    the summary variance).
    """
    if not 0.0 <= rho_target < 1.0:
        raise ValueError("rho_target must lie in [0, 1)")
    W = int(ma_window) if ma_window is not None else 2 * N
    if rho_target == 0.0:
        return PuSignalModel(power=power, ma_window=W, ma_weight=0.0)

    def corr(weight: float) -> float:
        s = PuSignalModel(power=power, ma_window=W, ma_weight=weight)
        return u_lag_correlation(channel, s, N)

    hi_val = corr(1.0)
    if hi_val < rho_target:
        raise ValueError(
            f"lag-1 correlation {rho_target} unreachable: max {hi_val:.4f} at "
            f"window {W} (increase ma_window or signal power)"
        )
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if corr(mid) < rho_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return PuSignalModel(power=power, ma_window=W, ma_weight=0.5 * (lo + hi))


def normalize_unit_report_noise(mom: MomentSet, sigma_z2: float) -> MomentSet:
    """Rescale the summary statistics by 1/sigma_z so reports have unit noise.

    The Taylor-approximate objective pieces assume unit reporting-noise power;
    dividing u by sigma_z (means by 1/sigma_z, second moments by 1/sigma_z2)
    realizes that convention without changing any detection probability.
    """
    s = 1.0 / math.sqrt(sigma_z2)
    s2 = s * s
    return replace(
        mom,
        mu_uL_h=mom.mu_uL_h * s,
        R_uL_h=mom.R_uL_h * s2,
        C_uL_h=mom.C_uL_h * s2,
        C_uLu_h=mom.C_uLu_h * s2,
        mu_uL=mom.mu_uL * s,
        R_uL=mom.R_uL * s2,
        C_uL=mom.C_uL * s2,
        C_uLu=mom.C_uLu * s2,
    )
