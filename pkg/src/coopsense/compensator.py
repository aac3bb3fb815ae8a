"""Linear MMSE reconstruction of local summaries from interrupted reports.

The fusion center receives y_L = Theta u_L + z and recovers an estimate
u_hat = Xi' y_L + eps of the current-interval summaries.  The optimal affine
weights follow from the unconditional report statistics:

    Xi  = C_yL^{-1} C_yLu          (one column per node)
    eps = E[u] - Xi' E[y_L]

Conditional statistics of u_hat given the hypothesis and a fixed switch
pattern b feed the fusion-rule analysis: with Btil = diag(b),

    E[u_hat | h, b]   = Xi' Btil mu_uL|h + eps
    Cov(u_hat | h, b) = Xi' (Btil C_uL|h Btil + sigma_z2 I) Xi

and the mean separation the detector sees is a_b = Xi' Btil (mu1 - mu0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BernoulliSchedule
from .moments import MomentSet, ReportMoments, symmetrize

__all__ = [
    "CompensatorWeights",
    "EstimateStats",
    "estimate_stats",
    "fit",
    "apply",
    "conditional_stats",
    "mean_shift_exact",
    "mean_shift_unconditional",
    "estimate_cov_unconditional",
    "mse",
]

RIDGE_SCALE = 1e-9


@dataclass(frozen=True)
class CompensatorWeights:
    """Fitted affine reconstruction weights.

    Attributes:
        xi: (n, K) weight matrix; column k reconstructs node k's summary.
        eps: (K,) affine offsets.
        p: (n,) forwarding probabilities the fit assumed.
        sigma_z2: reporting-noise power the fit assumed.
    """

    xi: np.ndarray
    eps: np.ndarray
    p: np.ndarray
    sigma_z2: float

    @property
    def n(self) -> int:
        return self.xi.shape[0]

    @property
    def K(self) -> int:
        return self.xi.shape[1]


def fit(mom: MomentSet, rep: ReportMoments, ridge: float | None = None) -> CompensatorWeights:
    """Solve the normal equations for the affine MMSE weights.

    A small ridge (1e-9 of the average diagonal) regularizes the solve; the
    report covariance is already positive definite for any schedule because
    of the reporting-noise floor, so the ridge only guards conditioning.
    """
    n = rep.n
    C = rep.C_yL
    lam = ridge if ridge is not None else RIDGE_SCALE * np.trace(C) / n
    A = C + lam * np.eye(n)
    xi = np.linalg.solve(A, rep.C_yLu)
    eps = mom.mu_u - xi.T @ rep.mu_yL
    return CompensatorWeights(xi=xi, eps=eps, p=rep.p.copy(), sigma_z2=rep.sigma_z2)


def apply(comp: CompensatorWeights, yL: np.ndarray) -> np.ndarray:
    """Reconstruct summaries from one report window or a batch of them.

    Accepts shape (n,) or (m, n); returns (K,) or (m, K).
    """
    y = np.asarray(yL, dtype=float)
    if y.shape[-1] != comp.n:
        raise ValueError(f"report window has length {y.shape[-1]}, expected {comp.n}")
    return y @ comp.xi + comp.eps


def conditional_stats(
    comp: CompensatorWeights, mom: MomentSet, b: np.ndarray, h: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of u_hat given hypothesis h and switch pattern b."""
    if h not in (0, 1):
        raise ValueError("h must be 0 or 1")
    bv = np.asarray(b, dtype=float)
    if bv.shape != (comp.n,):
        raise ValueError(f"switch pattern must have shape ({comp.n},)")
    mu = comp.xi.T @ (bv * mom.mu_uL_h[h]) + comp.eps
    inner = (bv[:, None] * mom.C_uL_h[h] * bv[None, :])
    inner[np.diag_indices(comp.n)] += comp.sigma_z2
    cov = symmetrize(comp.xi.T @ inner @ comp.xi)
    return mu, cov


def mean_shift_exact(comp: CompensatorWeights, mom: MomentSet, b: np.ndarray) -> np.ndarray:
    """Mean separation a_b = Xi' diag(b) (mu1 - mu0) for a fixed switch pattern."""
    bv = np.asarray(b, dtype=float)
    return comp.xi.T @ (bv * mom.delta_mu)


def mean_shift_unconditional(
    comp: CompensatorWeights,
    mom: MomentSet,
    sched: BernoulliSchedule,
    approx: bool = False,
) -> np.ndarray:
    """Average mean separation over switch patterns, a = Xi' diag(p) (mu1 - mu0).

    With ``approx`` the MMSE weights are replaced by their unit-noise
    small-summary surrogate Xi ~ diag(p) C_uLu, giving
    a ~ C_uLu' diag(p)^2 (mu1 - mu0); valid in the normalized convention
    where the reporting noise has unit power.
    """
    pd = sched.p * mom.delta_mu
    if approx:
        return mom.C_uLu.T @ (sched.p * pd)
    return comp.xi.T @ pd


def estimate_cov_unconditional(
    comp: CompensatorWeights,
    mom: MomentSet,
    rep: ReportMoments,
    h: int,
    approx: bool = False,
) -> np.ndarray:
    """Covariance of u_hat given only the hypothesis (switches averaged out).

    Exact form: Xi' C_yL|h Xi.  The ``approx`` form substitutes the unit-noise
    surrogate weights and treats the report covariance as the identity,
    yielding C_uLu' diag(p)^2 C_uLu (independent of h).
    """
    if h not in (0, 1):
        raise ValueError("h must be 0 or 1")
    if approx:
        P2 = rep.p ** 2
        return symmetrize(mom.C_uLu.T @ (P2[:, None] * mom.C_uLu))
    return symmetrize(comp.xi.T @ rep.C_yL_h[h] @ comp.xi)


@dataclass(frozen=True)
class EstimateStats:
    """Statistics of the reconstruction u_hat for one switch pattern b.

    Bundles the conditional mean/covariance under both hypotheses, the
    conditional mean separation a_b, and the pattern-averaged separation and
    covariances used by the fusion analysis.
    """

    b: np.ndarray            # (n,) the pattern these stats condition on
    mu_hat_h_b: np.ndarray   # (2, K)
    C_hat_h_b: np.ndarray    # (2, K, K)
    a_b: np.ndarray          # (K,)
    a: np.ndarray            # (K,)
    C_hat_h: np.ndarray      # (2, K, K) unconditional over switch patterns

    @property
    def K(self) -> int:
        return self.a_b.size


def estimate_stats(
    comp: CompensatorWeights,
    mom: MomentSet,
    rep: ReportMoments,
    sched: BernoulliSchedule,
    b: np.ndarray,
) -> EstimateStats:
    """Assemble the full estimate-statistics bundle for one switch pattern."""
    mus, covs = zip(*(conditional_stats(comp, mom, b, h) for h in (0, 1)))
    C_hat_h = np.stack([
        estimate_cov_unconditional(comp, mom, rep, h) for h in (0, 1)
    ])
    return EstimateStats(
        b=np.asarray(b, dtype=np.int8),
        mu_hat_h_b=np.stack(mus),
        C_hat_h_b=np.stack(covs),
        a_b=mean_shift_exact(comp, mom, b),
        a=mean_shift_unconditional(comp, mom, sched),
        C_hat_h=C_hat_h,
    )


def mse(comp: CompensatorWeights, mom: MomentSet, rep: ReportMoments) -> np.ndarray:
    """Per-node mean squared reconstruction error E[(u_hat_k - u_k)^2].

    Exact for any affine weights: built from raw second moments, which mix
    exactly across the hypothesis prior (no covariance-convention ambiguity).
    """
    p, s2 = rep.p, rep.sigma_z2
    pr = np.array([1.0 - mom.prior_h1, mom.prior_h1])
    lag0 = np.arange(mom.K) * (mom.L + 1)
    # E[u_L u'], E[y_L y_L'], E[y_L u'], E[u_k^2] under the prior mixture
    R_uLu = sum(pr[h] * (mom.C_uLu_h[h]
                         + np.outer(mom.mu_uL_h[h], mom.mu_uL_h[h, lag0]))
                for h in (0, 1))
    R_y = (p[:, None] * mom.R_uL * p[None, :]
           + np.diag(p * (1.0 - p) * np.diag(mom.R_uL) + s2))
    E_yu = p[:, None] * R_uLu
    mu_y = p * mom.mu_uL
    R_uu = np.diag(mom.R_uL)[lag0]
    quad = np.einsum("ik,ij,jk->k", comp.xi, R_y, comp.xi)
    cross = np.einsum("ik,ik->k", comp.xi, E_yu)
    lin = comp.xi.T @ mu_y
    return (R_uu - 2.0 * cross - 2.0 * comp.eps * mom.mu_u
            + quad + 2.0 * comp.eps * lin + comp.eps ** 2)
