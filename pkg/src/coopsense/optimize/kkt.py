"""Closed-form two-stage schedule design via KKT conditions.

The pattern-conditioned detection objective

    f(p) = (Q^{-1}(alpha) * sqrt(p' Sigma0 p) - q' p) / sqrt(p' Sigma1 p)

is homogeneous of degree zero, so its relaxed minimizer can be found in
closed form (up to a scalar root) and then scaled onto the boundary of
the box-plus-budget feasible region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular

from ..detection import np_pieces, qfunc_inv
from ..model import BernoulliSchedule, NetworkConfig, Realization
from ..moments import MomentSet, normalize_unit_report_noise

KAPPA_TOL = 1e-10
RESIDUAL_TOL = 1e-12
MAX_BISECT = 300


class KktInfeasibleError(RuntimeError):
    """No admissible kappa keeps the shifted matrix positive definite."""


@dataclass(frozen=True)
class KktDirection:
    """Relaxed minimizer with its defining-equation certificates.

    norm_residual is | sqrt(zeta' Sigma0 zeta) - 1 | and min_eig is the
    smallest eigenvalue of Q^{-1}(alpha) I + kappa * A.
    """

    zeta: np.ndarray
    kappa: float
    norm_residual: float
    min_eig: float


def kkt_direction(
    sigma0: np.ndarray,
    sigma1: np.ndarray,
    q: np.ndarray,
    alpha: float,
) -> KktDirection:
    """Relaxed optimum zeta of the schedule-design objective.

    Stationarity gives [t0*Sigma0 + kappa*Sigma1] zeta = q with t0 =
    Q^{-1}(alpha); kappa is pinned by the unit-energy normalization
    sqrt(zeta' Sigma0 zeta) = 1 and must keep t0*I + kappa*A positive
    definite (A similar to the symmetric whitened form used below).
    """
    sigma0 = np.asarray(sigma0, dtype=float)
    sigma1 = np.asarray(sigma1, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    if sigma0.shape != (n, n) or sigma1.shape != (n, n):
        raise ValueError("sigma0/sigma1 must be square and match q")
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5) so Q^{-1}(alpha) > 0")
    t0 = qfunc_inv(alpha)

    try:
        l0 = cholesky(sigma0, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sigma0 must be positive definite") from exc
    # whiten: a_tilde = L0^-1 Sigma1 L0^-T shares its spectrum with
    # Sigma1 Sigma0^-1, so the definiteness interval is the same
    half = solve_triangular(l0, sigma1, lower=True)
    a_tilde = solve_triangular(l0, half.T, lower=True)
    a_tilde = 0.5 * (a_tilde + a_tilde.T)
    lam, vecs = eigh(a_tilde)
    lam = np.clip(lam, 0.0, None)
    c_tilde = solve_triangular(l0, q, lower=True)
    d = vecs.T @ c_tilde

    d2 = d * d
    lam_max = float(lam[-1])

    def h(kappa: float) -> float:
        dens = t0 + kappa * lam
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(d2 > 0.0, d2 / (dens * dens), 0.0)
        return float(np.sum(terms))

    # h is strictly decreasing on the definiteness interval
    # kappa > -t0/lam_max; bracket the root h(kappa) = 1 there.
    if lam_max <= 1e-14 * max(1.0, float(np.max(np.abs(sigma1)))):
        raise KktInfeasibleError(
            "sigma1 is numerically zero: the normalization cannot pin kappa")
    kappa_lo = -t0 / lam_max
    h_inf = float(np.sum(d2[lam <= 1e-12 * lam_max])) / (t0 * t0)
    if h_inf >= 1.0:
        raise KktInfeasibleError(
            "no admissible kappa: the objective stays above the unit level "
            "on the whole positive-definite interval")

    lo = None
    step = max(1.0, abs(kappa_lo)) * 1e-8
    for _ in range(60):
        cand = kappa_lo + step
        if h(cand) > 1.0:
            lo = cand
            break
        step *= 0.5
    if lo is None:
        raise KktInfeasibleError(
            "no admissible kappa: the unit level is not reached inside the "
            "positive-definite interval")
    hi = max(1.0, abs(lo)) + abs(kappa_lo)
    for _ in range(200):
        if h(hi) < 1.0:
            break
        hi *= 2.0
    else:
        raise KktInfeasibleError("kappa bracket expansion failed")

    kappa = 0.5 * (lo + hi)
    for _ in range(MAX_BISECT):
        kappa = 0.5 * (lo + hi)
        val = h(kappa)
        if abs(val - 1.0) <= RESIDUAL_TOL:
            break
        if val > 1.0:
            lo = kappa
        else:
            hi = kappa
        if hi - lo <= KAPPA_TOL * max(1.0, abs(kappa)):
            kappa = 0.5 * (lo + hi)
            break

    coeff = d / (t0 + kappa * lam)
    zeta = solve_triangular(l0.T, vecs @ coeff, lower=False)
    residual = abs(np.sqrt(h(kappa)) - 1.0)
    min_eig = float(np.min(t0 + kappa * lam))
    if min_eig <= 0.0:
        raise KktInfeasibleError("kappa root violates positive definiteness")
    return KktDirection(zeta=zeta, kappa=float(kappa),
                        norm_residual=float(residual), min_eig=min_eig)


def scale_to_feasible(zeta: np.ndarray, eta: float) -> np.ndarray:
    """Scale a relaxed direction onto the feasible-region boundary.

    Negative entries are clipped to zero first; the scale is the budget
    normalization (1 - eta) n / 1'zeta unless that violates the box, in
    which case the largest entry is pinned at one.  At least one of the
    two constraints is active on return.
    """
    zeta = np.asarray(zeta, dtype=float)
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    z = np.clip(zeta, 0.0, None)
    total = float(z.sum())
    if total <= 0.0:
        raise ValueError("degenerate direction: no positive entries to scale")
    n = z.size
    lam_budget = (1.0 - eta) * n / total
    if float(np.max(lam_budget * z)) <= 1.0:
        return lam_budget * z
    return z / float(np.max(z))


def p5_objective(
    p: np.ndarray,
    sigma0: np.ndarray,
    sigma1: np.ndarray,
    q: np.ndarray,
    alpha: float,
) -> np.ndarray | float:
    """Schedule-design objective (lower is better); batched over rows."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p[None, :] if single else p
    t0 = qfunc_inv(alpha)
    q0 = np.einsum("bi,ij,bj->b", pts, sigma0, pts)
    q1 = np.einsum("bi,ij,bj->b", pts, sigma1, pts)
    lin = pts @ np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = (t0 * np.sqrt(np.maximum(q0, 0.0)) - lin) / \
            np.sqrt(np.maximum(q1, 0.0))
    vals = np.where(q1 <= 0.0, np.inf, vals)
    return float(vals[0]) if single else vals


def solve_npc_two_stage(
    cfg: NetworkConfig,
    mom: MomentSet,
    rule_w: np.ndarray,
    b: Realization | np.ndarray,
) -> BernoulliSchedule:
    """Schedule for the next window given the last observed pattern.

    Composes the unit-noise normalization, the pattern-conditioned
    surrogate pieces, the relaxed KKT direction, and the feasibility
    scaling into one call.
    """
    b_arr = b.b if isinstance(b, Realization) else np.asarray(b)
    mom_n = normalize_unit_report_noise(mom, cfg.sigma_z2)
    pieces = np_pieces(rule_w, mom_n, b_arr)
    direction = kkt_direction(pieces.sigma0, pieces.sigma1, pieces.q_b,
                              cfg.alpha)
    return BernoulliSchedule(scale_to_feasible(direction.zeta, cfg.eta))
