"""Deflection-based schedule design via a radius-swept lifted relaxation.

The overall-statistics design objective reduces, after the small-signal
approximations of the report-channel terms, to a ratio of two diagonal
quadratic forms in the schedule.  In the scaled variable pi =
D_sigma^{1/2} p the problem becomes maximizing pi' D pi / ||pi|| over a
polytope, which is scanned by fixing ||pi|| = r and solving the
resulting quadratic subproblem through its lifted positive-semidefinite
relaxation with product-constraint (RLT) rows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..moments import MomentSet
from .sdp import SdpError, SdpProblem, SdpSolution, sdp_solve, write_sdpa

# Relative floor applied to the diagonal variance proxies so the ratio
# matrix D stays finite.
D_SIGMA_FLOOR = 1e-12

# Half-width of the trace band Tr(V) = r^2, relative to the scaled
# right-hand side; the exact equality has no interior.
TRACE_BAND = 1e-8

DEFAULT_N_RADII = 64
DEFAULT_REFINE_ITERS = 8
# Lowest swept radius as a fraction of the largest feasible one.
RADIUS_SPAN = 256.0
_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DcProgram:
    """Diagonal pieces of the scaled fractional design objective.

    d_mu holds the per-coordinate mean-shift products (C_uLu w) o
    delta_mu and d_sigma the squared response entries (C_uLu w)^2; the
    ratio d = d_mu / d_sigma is the diagonal of the objective matrix in
    the scaled variable.
    """

    d_mu: np.ndarray
    d_sigma: np.ndarray

    def __post_init__(self) -> None:
        d_mu = np.atleast_1d(np.asarray(self.d_mu, dtype=float))
        d_sigma = np.atleast_1d(np.asarray(self.d_sigma, dtype=float))
        if d_mu.ndim != 1 or d_mu.shape != d_sigma.shape:
            raise ValueError("d_mu and d_sigma must be equal-length vectors")
        if not np.all(d_sigma > 0.0):
            raise ValueError("d_sigma entries must be positive after flooring")
        if not (np.all(np.isfinite(d_mu)) and np.all(np.isfinite(d_sigma))):
            raise ValueError("diagonal pieces must be finite")
        d_mu.setflags(write=False)
        d_sigma.setflags(write=False)
        object.__setattr__(self, "d_mu", d_mu)
        object.__setattr__(self, "d_sigma", d_sigma)

    @property
    def n(self) -> int:
        return self.d_mu.size

    @property
    def d(self) -> np.ndarray:
        """Diagonal of D = D_mu D_sigma^{-1}."""
        return self.d_mu / self.d_sigma

    @property
    def d_box(self) -> np.ndarray:
        """Upper box corner D_sigma^{1/2} 1 for the scaled variable."""
        return np.sqrt(self.d_sigma)

    @property
    def r_max(self) -> float:
        """Outer radius bound sqrt(Tr D_sigma) of the scan domain."""
        return float(np.sqrt(self.d_sigma.sum()))


def dc_matrices(mom: MomentSet, rule_w: np.ndarray) -> DcProgram:
    """Diagonal design pieces for the given fusion weights.

    Builds v = C_uLu w against the unconditional cross-covariance, then
    d_mu = v o (E[u_L|occupied] - E[u_L|vacant]) and d_sigma = v o v.
    Entries of d_sigma that vanish exactly identify coordinates the
    fused statistic cannot see and are rejected; small positive entries
    are floored relative to the largest.
    """
    w = np.asarray(rule_w, dtype=float)
    if w.shape != (mom.K,):
        raise ValueError(f"rule_w must have shape ({mom.K},), got {w.shape}")
    if not np.any(w != 0.0):
        raise ValueError("degenerate fusion weights: w = 0 has no response")
    v = mom.C_uLu @ w
    d_sigma = v * v
    top = float(d_sigma.max())
    if top <= 0.0 or np.any(d_sigma == 0.0):
        width = mom.L + 1
        idx = int(np.argmin(d_sigma))
        k, l = idx // width + 1, idx % width
        raise ValueError(
            f"degenerate node: the fused statistic has zero response at "
            f"node {k}, lag {l}"
        )
    d_sigma = np.maximum(d_sigma, D_SIGMA_FLOOR * top)
    delta_mu = mom.mu_uL_h[1] - mom.mu_uL_h[0]
    return DcProgram(d_mu=v * delta_mu, d_sigma=d_sigma)


def p7_objective(p: np.ndarray, prog: DcProgram) -> np.ndarray | float:
    """Approximate overall-statistics objective in schedule units.

    Equals (p' D_mu p) / sqrt(p' D_sigma p), batched over rows; the
    all-zero schedule scores zero (its limiting value).
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p[None, :] if single else p
    num = (pts * pts) @ prog.d_mu
    den = np.sqrt((pts * pts) @ prog.d_sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(den > 0.0, num / den, 0.0)
    return float(vals[0]) if single else vals


def p8_objective(pi: np.ndarray, prog: DcProgram) -> np.ndarray | float:
    """Scaled-variable objective pi' D pi / ||pi||, batched over rows."""
    pi = np.asarray(pi, dtype=float)
    single = pi.ndim == 1
    pts = pi[None, :] if single else pi
    num = (pts * pts) @ prog.d
    den = np.linalg.norm(pts, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(den > 0.0, num / den, 0.0)
    return float(vals[0]) if single else vals


def feasible_radius_bound(prog: DcProgram, eta: float) -> float:
    """Largest scaled norm the lifted feasible set can reach.

    Tr(V) under the product rows is at most the value of the linear
    knapsack max sum d_sigma_i p_i with sum p <= (1 - eta) n, 0 <= p <=
    1, attained by filling the largest entries first; the bound is
    tight (a feasible lift achieves it), so larger radii are infeasible.
    """
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    budget = (1.0 - eta) * prog.n
    order = np.sort(prog.d_sigma)[::-1]
    whole = int(np.floor(budget + 1e-12))
    total = float(order[:whole].sum())
    if whole < prog.n:
        total += (budget - whole) * float(order[whole])
    return float(np.sqrt(total))


@dataclass(frozen=True)
class QcqpSolution:
    """Lifted-relaxation solve at one radius.

    value is the relaxation objective Tr(D V) and (V, pi) the solver's
    lifted pair, which satisfies V >= pi pi' up to solver tolerance;
    pi_shell renormalizes pi onto the radius shell and p is the
    schedule recovered from it (clipped to the box and rescaled onto
    the budget when the renormalization pushed it outside);
    rank1_defect measures ||V - pi pi'||_F / ||V||_F.
    """

    V: np.ndarray
    pi: np.ndarray
    pi_shell: np.ndarray
    value: float
    p: np.ndarray
    rank1_defect: float
    sdp: SdpSolution


def _build_qcqp(prog: DcProgram, r: float, eta: float) -> SdpProblem:
    """Assemble the lifted relaxation in box-normalized units.

    With pi = diag(d_box) p the lifted pair (p, V') lives in a single
    PSD block [[1, p'], [p, V']]; all product rows then carry O(1)
    coefficients and the radius only enters the trace band.
    """
    n = prog.n
    budget = (1.0 - eta) * n
    d_sigma = prog.d_sigma
    s_tr = float(d_sigma.max())
    s_mu = float(np.max(np.abs(prog.d_mu)))
    obj_scale = s_mu if s_mu > 0.0 else 1.0

    prob = SdpProblem()
    y = prob.add_psd_block(n + 1)
    n_slack = 1 + n * (n + 1) // 2 + n * n + n * (n + 1) // 2 + 2
    sl = prob.add_lin_block(n_slack)

    # maximize sum_i d_mu_i V'_ii  ==  minimize the negated, scaled form
    for i in range(n):
        prob.obj_entry(y, 1 + i, 1 + i, -prog.d_mu[i] / obj_scale)

    prob.add_row(1.0, [(y, 0, 0, 1.0)])

    cur = 0
    # budget row: sum_i p_i + slack = (1 - eta) n
    entries = [(y, 0, 1 + i, 0.5) for i in range(n)]
    entries.append((sl, cur, 1.0))
    prob.add_row(budget, entries)
    cur += 1

    # lower product rows: V'_ij - p_i - p_j + 1 >= 0
    for i in range(n):
        for j in range(i, n):
            entries = []
            if i == j:
                entries.append((y, 1 + i, 1 + i, 1.0))
                entries.append((y, 0, 1 + i, -1.0))
            else:
                entries.append((y, 1 + i, 1 + j, 0.5))
                entries.append((y, 0, 1 + i, -0.5))
                entries.append((y, 0, 1 + j, -0.5))
            entries.append((sl, cur, -1.0))
            prob.add_row(-1.0, entries)
            cur += 1

    # upper product rows: V'_ij <= p_i for every ordered pair (i, j)
    for i in range(n):
        for j in range(n):
            entries = []
            if i == j:
                entries.append((y, 1 + i, 1 + i, 1.0))
            else:
                entries.append((y, min(i, j) + 1, max(i, j) + 1, 0.5))
            entries.append((y, 0, 1 + i, -0.5))
            entries.append((sl, cur, 1.0))
            prob.add_row(0.0, entries)
            cur += 1

    # nonnegativity rows: V'_ij >= 0
    for i in range(n):
        for j in range(i, n):
            coef = 1.0 if i == j else 0.5
            prob.add_row(0.0, [(y, 1 + i, 1 + j, coef), (sl, cur, -1.0)])
            cur += 1

    # trace band: sum_i (d_sigma_i / s_tr) V'_ii = (r^2 / s_tr) +- tol
    rhs = r * r / s_tr
    band = TRACE_BAND * max(1.0, rhs)
    diag_entries = [(y, 1 + i, 1 + i, d_sigma[i] / s_tr) for i in range(n)]
    prob.add_row(rhs + band, diag_entries + [(sl, cur, 1.0)])
    cur += 1
    prob.add_row(rhs - band, diag_entries + [(sl, cur, -1.0)])
    cur += 1

    assert cur == n_slack
    return prob


def solve_qcqp_sdp(
    prog: DcProgram,
    r: float,
    eta: float,
    gap_tol: float = 1e-7,
    max_iter: int = 200,
    dump_path=None,
) -> QcqpSolution:
    """Solve the fixed-radius subproblem through its lifted relaxation.

    Returns the relaxation value (an upper bound on the true subproblem
    optimum) together with a feasible schedule recovered from the
    first-order block.  Optionally dumps the assembled program in the
    sparse exchange format before solving.
    """
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    if not 0.0 < r <= prog.r_max * (1.0 + 1e-9):
        raise ValueError(f"radius {r} outside (0, sqrt(Tr D_sigma)]")
    n = prog.n
    prob = _build_qcqp(prog, r, eta)
    if dump_path is not None:
        write_sdpa(prob, dump_path,
                   comment=f"lifted fixed-radius design, n={n}, r={r:.6g}")
    sol = sdp_solve(prob, gap_tol=gap_tol, max_iter=max_iter)
    if sol.status != "optimal":
        raise SdpError(
            f"fixed-radius solve did not converge: {sol.status} "
            f"(gap {sol.rel_gap:.2e}, feas {max(sol.r_primal, sol.r_dual):.2e})",
            status=sol.status,
            info={"rel_gap": sol.rel_gap, "r_primal": sol.r_primal,
                  "r_dual": sol.r_dual, "iterations": sol.iterations},
        )

    Y = sol.x[0]
    y00 = float(Y[0, 0])
    p_unit = Y[0, 1:] / y00
    V_unit = Y[1:, 1:] / y00
    d_box = prog.d_box
    pi_raw = d_box * p_unit
    V = V_unit * np.outer(d_box, d_box)
    value = float(np.sum(prog.d_mu * np.diag(V_unit)))

    nrm_v = float(np.linalg.norm(V))
    defect = float(np.linalg.norm(V - np.outer(pi_raw, pi_raw)))
    rank1_defect = defect / nrm_v if nrm_v > 0.0 else 0.0

    nrm_pi = float(np.linalg.norm(pi_raw))
    pi_shell = pi_raw * (r / nrm_pi) if nrm_pi > 0.0 else pi_raw
    p = np.clip(pi_shell / d_box, 0.0, 1.0)
    budget = (1.0 - eta) * n
    total = float(p.sum())
    if total > budget:
        p = p * (budget / total)
    return QcqpSolution(V=V, pi=pi_raw, pi_shell=pi_shell, value=value, p=p,
                        rank1_defect=rank1_defect, sdp=sol)


@dataclass(frozen=True)
class DcSweepResult:
    """Radius scan outcome: the incumbent schedule and the sweep log."""

    p: np.ndarray
    pi: np.ndarray
    r_best: float
    value: float
    radii: np.ndarray
    values: np.ndarray
    relaxed: np.ndarray
    n_failed: int


def solve_dc_sweep(
    prog: DcProgram,
    eta: float,
    n_radii: int = DEFAULT_N_RADII,
    refine_iters: int = DEFAULT_REFINE_ITERS,
    gap_tol: float = 1e-7,
) -> DcSweepResult:
    """Scan the radius domain and keep the best recovered schedule.

    Solves the lifted subproblem on a log grid over the reachable part
    of [0, sqrt(Tr D_sigma)], scores every recovered schedule by the
    true fractional objective, then golden-section refines the radius
    around the incumbent.  Radii whose solve fails are skipped with a
    warning; if every radius fails the scan aborts.
    """
    if n_radii < 2:
        raise ValueError("need at least two radii to scan")
    r_hi = feasible_radius_bound(prog, eta)
    radii = np.geomspace(r_hi / RADIUS_SPAN, r_hi, n_radii)
    values = np.full(n_radii, -np.inf)
    relaxed = np.full(n_radii, np.nan)
    n_failed = 0

    def attempt(r: float) -> tuple[float, QcqpSolution | None]:
        try:
            qs = solve_qcqp_sdp(prog, r, eta, gap_tol=gap_tol)
        except SdpError as exc:
            warnings.warn(f"radius {r:.6g} skipped: {exc}", RuntimeWarning,
                          stacklevel=2)
            return -np.inf, None
        return float(p8_objective(prog.d_box * qs.p, prog)), qs

    best_val, best_qs, best_idx = -np.inf, None, -1
    for idx, r in enumerate(radii):
        val, qs = attempt(float(r))
        if qs is None:
            n_failed += 1
            continue
        values[idx] = val
        relaxed[idx] = qs.value / r
        if val > best_val:
            best_val, best_qs, best_idx = val, qs, idx
    if best_qs is None:
        raise SdpError("every swept radius failed to solve",
                       status="all_failed")

    lo = radii[best_idx - 1] if best_idx > 0 else radii[best_idx] / 2.0
    hi = radii[best_idx + 1] if best_idx + 1 < n_radii else r_hi
    r_best = float(radii[best_idx])
    a, b = float(lo), float(hi)
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, qc = attempt(c)
    fd, qd = attempt(d)
    for _ in range(max(0, refine_iters)):
        if fc >= fd:
            b, d, fd, qd = d, c, fc, qc
            c = b - _INV_GOLDEN * (b - a)
            fc, qc = attempt(c)
        else:
            a, c, fc, qc = c, d, fd, qd
            d = a + _INV_GOLDEN * (b - a)
            fd, qd = attempt(d)
    for r_cand, f_cand, q_cand in ((c, fc, qc), (d, fd, qd)):
        if q_cand is not None and f_cand > best_val:
            best_val, best_qs, r_best = f_cand, q_cand, float(r_cand)

    return DcSweepResult(p=best_qs.p, pi=best_qs.pi_shell, r_best=r_best,
                         value=best_val, radii=radii, values=values,
                         relaxed=relaxed, n_failed=n_failed)
