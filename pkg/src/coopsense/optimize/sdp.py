"""Embedded dense solver for small conic programs.

Standard form:

    minimize    <C, X>
    subject to  <A_i, X> = b_i,   i = 1..m,
                X in K,

where K is a product of dense symmetric-PSD blocks and a nonnegative
orthant, and the dual is max b'y with C - sum_i y_i A_i in K.  The
implementation is an infeasible-start primal-dual path-following method
with Nesterov-Todd scaling and Mehrotra predictor-corrector steps,
sized for the lifted pattern-design programs of this package (PSD
blocks up to 64).  Everything is dense; the per-iteration cost is the
Cholesky factorization of the m x m Schur complement.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve, cholesky, eigvalsh, svd

MAX_PSD_BLOCK = 64
FRACTION_TO_BOUNDARY = 0.98
DEFAULT_GAP_TOL = 1e-6
DEFAULT_FEAS_TOL = 1e-7
DEFAULT_MAX_ITER = 200


class SdpError(RuntimeError):
    """Raised when a conic solve cannot produce a usable optimum."""

    def __init__(self, message: str, status: str = "error", info: dict | None = None):
        super().__init__(message)
        self.status = status
        self.info = info or {}


class SdpProblem:
    """Mutable container for one conic program in standard form.

    Blocks are registered first (``add_psd_block`` / ``add_lin_block``),
    then the objective and constraint rows reference them by index.
    PSD entries are given on one triangle and mirrored internally, so a
    coefficient v at (i, j), i != j, contributes 2*v*X_ij to <A, X>.
    """

    def __init__(self) -> None:
        self.blocks: list[tuple[str, int]] = []
        self._c: list[dict] = []
        self._rows: list[list[tuple]] = []
        self._b: list[float] = []
        self._compiled = None

    # ---- construction -------------------------------------------------

    def add_psd_block(self, size: int) -> int:
        if size < 1:
            raise ValueError("block size must be positive")
        if size > MAX_PSD_BLOCK:
            raise ValueError(
                f"psd block size {size} exceeds the supported limit of {MAX_PSD_BLOCK}")
        self.blocks.append(("s", int(size)))
        self._c.append({})
        self._compiled = None
        return len(self.blocks) - 1

    def add_lin_block(self, size: int) -> int:
        if size < 1:
            raise ValueError("block size must be positive")
        self.blocks.append(("l", int(size)))
        self._c.append({})
        self._compiled = None
        return len(self.blocks) - 1

    def _check_entry(self, block: int, i: int, j: int | None) -> str:
        kind, size = self.blocks[block]
        if kind == "s":
            if j is None:
                raise ValueError("psd entries need a column index")
            if not (0 <= i < size and 0 <= j < size):
                raise IndexError(f"psd entry ({i}, {j}) outside block of size {size}")
        else:
            if j is not None:
                raise ValueError("lin entries take a single index")
            if not 0 <= i < size:
                raise IndexError(f"lin entry {i} outside block of size {size}")
        return kind

    def obj_entry(self, block: int, i: int, j: int | None = None,
                  val: float = 0.0) -> None:
        kind = self._check_entry(block, i, j)
        key = (min(i, j), max(i, j)) if kind == "s" else i
        self._c[block][key] = self._c[block].get(key, 0.0) + float(val)
        self._compiled = None

    def add_row(self, rhs: float, entries) -> int:
        """Add one equality row <A, X> = rhs; entries reference blocks.

        Each entry is (block, i, j, val) for a PSD block or
        (block, i, val) for a lin block.
        """
        row = []
        for e in entries:
            if len(e) == 4:
                block, i, j, val = e
                kind = self._check_entry(block, i, j)
                if kind != "s":
                    raise ValueError("4-entry rows address psd blocks only")
                row.append((block, min(i, j), max(i, j), float(val)))
            elif len(e) == 3:
                block, i, val = e
                kind = self._check_entry(block, i, None)
                row.append((block, i, float(val)))
            else:
                raise ValueError("entries must be 3- or 4-tuples")
        self._rows.append(row)
        self._b.append(float(rhs))
        self._compiled = None
        return len(self._rows) - 1

    @property
    def m(self) -> int:
        return len(self._rows)

    # ---- compiled sparse form ------------------------------------------

    def compiled(self):
        """Per-block CSR constraint matrices over vec(X), plus C and b."""
        if self._compiled is not None:
            return self._compiled
        m = self.m
        g_list, c_list = [], []
        for bi, (kind, size) in enumerate(self.blocks):
            if kind == "s":
                c_mat = np.zeros((size, size))
                for (i, j), v in self._c[bi].items():
                    c_mat[i, j] = v
                    c_mat[j, i] = v
                c_list.append(c_mat)
                rows_idx, cols_idx, vals = [], [], []
                for r, row in enumerate(self._rows):
                    for e in row:
                        if len(e) == 4 and e[0] == bi:
                            _, i, j, v = e
                            rows_idx.append(r)
                            cols_idx.append(i * size + j)
                            vals.append(v)
                            if i != j:
                                rows_idx.append(r)
                                cols_idx.append(j * size + i)
                                vals.append(v)
                g = sp.csr_matrix((vals, (rows_idx, cols_idx)),
                                  shape=(m, size * size))
            else:
                c_vec = np.zeros(size)
                for i, v in self._c[bi].items():
                    c_vec[i] = v
                c_list.append(c_vec)
                rows_idx, cols_idx, vals = [], [], []
                for r, row in enumerate(self._rows):
                    for e in row:
                        if len(e) == 3 and e[0] == bi:
                            _, i, v = e
                            rows_idx.append(r)
                            cols_idx.append(i)
                            vals.append(v)
                g = sp.csr_matrix((vals, (rows_idx, cols_idx)), shape=(m, size))
            g_list.append(g)
        b = np.asarray(self._b, dtype=float)
        self._compiled = (g_list, c_list, b)
        return self._compiled


@dataclass(frozen=True)
class SdpSolution:
    status: str
    x: tuple
    s: tuple
    y: np.ndarray
    pobj: float
    dobj: float
    gap: float
    rel_gap: float
    r_primal: float
    r_dual: float
    iterations: int


# ---- solver internals ----------------------------------------------------


def _apply_a(g_list, blocks, x_blocks) -> np.ndarray:
    out = 0.0
    for g, (kind, _), xb in zip(g_list, blocks, x_blocks):
        out = out + g @ (xb.ravel() if kind == "s" else xb)
    return np.asarray(out)


def _apply_at(g_list, blocks, y) -> list:
    out = []
    for g, (kind, size) in zip(g_list, blocks):
        v = g.T @ y
        out.append(v.reshape(size, size) if kind == "s" else v)
    return out


def _inner(blocks, a_blocks, b_blocks) -> float:
    tot = 0.0
    for (kind, _), a, b in zip(blocks, a_blocks, b_blocks):
        tot += float(np.sum(a * b))
    return tot


def _nt_scaling(blocks, x_blocks, s_blocks):
    """Per-block NT scaling: both X and S map to the same diagonal."""
    scalings = []
    for (kind, _), xb, sb in zip(blocks, x_blocks, s_blocks):
        if kind == "s":
            lx = cholesky(xb, lower=True)
            ls = cholesky(sb, lower=True)
            u, sig, vt = svd(ls.T @ lx)
            isq = 1.0 / np.sqrt(sig)
            r = lx @ (vt.T * isq)
            rinv = (u * isq).T @ ls.T
            scalings.append(("s", r, rinv, sig))
        else:
            w = np.sqrt(xb / sb)
            lam = np.sqrt(xb * sb)
            scalings.append(("l", w, lam))
    return scalings


def _schur(g_list, blocks, scalings, reg: float) -> np.ndarray:
    m = g_list[0].shape[0] if g_list else 0
    mmat = np.zeros((m, m))
    for g, (kind, size), sc in zip(g_list, blocks, scalings):
        if g.nnz == 0:
            continue
        if kind == "s":
            w = sc[1] @ sc[1].T
            wkw = np.kron(w, w)
            h = g @ wkw                       # (m, k^2) dense
            mmat += (g @ h.T).T
        else:
            w2 = sc[1] ** 2
            mmat += (g.multiply(w2) @ g.T).toarray()
    mmat = 0.5 * (mmat + mmat.T)
    if m:
        mmat[np.diag_indices(m)] += reg * max(1.0, np.trace(mmat) / m)
    return mmat


def _k_op(scalings, rc_blocks):
    """Solve dXhat + dShat = K(Rc) for the symmetrized complementarity."""
    out = []
    for sc, rc in zip(scalings, rc_blocks):
        if sc[0] == "s":
            lam = sc[3]
            out.append(2.0 * rc / np.add.outer(lam, lam))
        else:
            out.append(rc / sc[2])
    return out


def _newton(g_list, blocks, scalings, mfac, rp, rd_blocks, k_blocks):
    """One Newton solve given the factored Schur complement."""
    u_blocks = []
    for (kind, _), sc, rd, kb in zip(blocks, scalings, rd_blocks, k_blocks):
        if kind == "s":
            r = sc[1]
            w = r @ r.T
            u_blocks.append(r @ kb @ r.T - w @ rd @ w)
        else:
            w = sc[1]
            u_blocks.append(w * kb - (w ** 2) * rd)
    rhs = rp - _apply_a(g_list, blocks, u_blocks)
    dy = cho_solve(mfac, rhs) if rhs.size else rhs
    at_dy = _apply_at(g_list, blocks, dy)
    dx_blocks, ds_blocks, dxh_blocks, dsh_blocks = [], [], [], []
    for (kind, _), sc, rd, kb, at in zip(blocks, scalings, rd_blocks, k_blocks, at_dy):
        ds = rd - at
        if kind == "s":
            r = sc[1]
            dsh = r.T @ ds @ r
            dsh = 0.5 * (dsh + dsh.T)
            dxh = kb - dsh
            dx = r @ dxh @ r.T
            dx = 0.5 * (dx + dx.T)
        else:
            w = sc[1]
            dsh = w * ds
            dxh = kb - dsh
            dx = w * dxh
        dx_blocks.append(dx)
        ds_blocks.append(ds)
        dxh_blocks.append(dxh)
        dsh_blocks.append(dsh)
    return dy, dx_blocks, ds_blocks, dxh_blocks, dsh_blocks


def _max_step(blocks, scalings, dh_blocks) -> float:
    """Largest alpha with Lambda + alpha*Dhat staying in the cone."""
    alpha = np.inf
    for (kind, _), sc, dh in zip(blocks, scalings, dh_blocks):
        if kind == "s":
            lam = sc[3]
            scale = np.sqrt(np.outer(lam, lam))
            evs = eigvalsh(dh / scale)
            emin = evs[0]
        else:
            lam = sc[2]
            emin = np.min(dh / lam)
        if emin < 0:
            alpha = min(alpha, -1.0 / emin)
    return alpha


def _cone_violation(blocks, v_blocks) -> float:
    worst = 0.0
    for (kind, _), vb in zip(blocks, v_blocks):
        if kind == "s":
            worst = max(worst, float(max(0.0, -eigvalsh(vb)[0])))
        else:
            worst = max(worst, float(max(0.0, -np.min(vb))))
    return worst


def sdp_solve(
    prob: SdpProblem,
    gap_tol: float = DEFAULT_GAP_TOL,
    feas_tol: float = DEFAULT_FEAS_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SdpSolution:
    """Solve the conic program; statuses: optimal, primal_infeasible,
    dual_infeasible, max_iterations, numerical."""
    g_list, c_list, b = prob.compiled()
    blocks = list(prob.blocks)
    if not blocks:
        raise ValueError("problem has no blocks")
    nu = sum(size for _, size in blocks)

    scale_x = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    scale_s = max(1.0, max(float(np.max(np.abs(c))) if c.size else 0.0
                           for c in c_list))
    x_blocks = [np.eye(size) * scale_x if kind == "s" else np.full(size, scale_x)
                for kind, size in blocks]
    s_blocks = [np.eye(size) * scale_s if kind == "s" else np.full(size, scale_s)
                for kind, size in blocks]
    y = np.zeros(b.size)

    bnorm = 1.0 + float(np.linalg.norm(b))
    cnorm = 1.0 + np.sqrt(sum(float(np.sum(c * c)) for c in c_list))
    status = "max_iterations"
    it = 0
    rp = b - _apply_a(g_list, blocks, x_blocks)
    at_y = _apply_at(g_list, blocks, y)
    rd = [c - s - a for c, s, a in zip(c_list, s_blocks, at_y)]
    pobj = dobj = gap = rel_gap = 0.0
    rp_rel = rd_rel = np.inf

    for it in range(1, max_iter + 1):
        pobj = _inner(blocks, c_list, x_blocks)
        dobj = float(b @ y)
        gap = _inner(blocks, x_blocks, s_blocks)
        rel_gap = gap / max(1.0, abs(pobj), abs(dobj))
        rp_rel = float(np.linalg.norm(rp)) / bnorm
        rd_rel = np.sqrt(sum(float(np.sum(r * r)) for r in rd)) / cnorm
        if rel_gap <= gap_tol and rp_rel <= feas_tol and rd_rel <= feas_tol:
            status = "optimal"
            break

        if it > 3:
            ynorm = float(np.linalg.norm(y))
            if dobj > 0.0 and ynorm > 0.0:
                ray = [-a for a in _apply_at(g_list, blocks, y / ynorm)]
                if (_cone_violation(blocks, ray) <= 1e-9
                        and dobj / ynorm >= 1e-9 * bnorm):
                    status = "primal_infeasible"
                    break
            xnorm = np.sqrt(sum(float(np.sum(xb * xb)) for xb in x_blocks))
            ax = b - rp
            if (pobj < 0.0 and xnorm > 0.0
                    and float(np.linalg.norm(ax)) <= 1e-9 * xnorm
                    and pobj <= -1e-9 * xnorm):
                status = "dual_infeasible"
                break

        try:
            scalings = _nt_scaling(blocks, x_blocks, s_blocks)
        except np.linalg.LinAlgError:
            status = "numerical"
            break
        mu = gap / nu

        mfac = None
        reg = 1e-13
        for _ in range(5):
            try:
                mmat = _schur(g_list, blocks, scalings, reg)
                mfac = cho_factor(mmat) if b.size else None
                break
            except np.linalg.LinAlgError:
                reg *= 100.0
        if mfac is None and b.size:
            status = "numerical"
            break

        # predictor: drive straight toward complementarity zero
        rc_aff = []
        for sc in scalings:
            if sc[0] == "s":
                rc_aff.append(np.diag(-sc[3] ** 2))
            else:
                rc_aff.append(-sc[2] ** 2)
        k_aff = _k_op(scalings, rc_aff)
        dy_a, dx_a, ds_a, dxh_a, dsh_a = _newton(
            g_list, blocks, scalings, mfac, rp, rd, k_aff)
        ap = min(1.0, _max_step(blocks, scalings, dxh_a))
        ad = min(1.0, _max_step(blocks, scalings, dsh_a))
        gap_aff = (gap + ap * _inner(blocks, dx_a, s_blocks)
                   + ad * _inner(blocks, x_blocks, ds_a)
                   + ap * ad * _inner(blocks, dx_a, ds_a))
        mu_aff = max(gap_aff, 0.0) / nu
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # corrector with Mehrotra second-order term
        rc_cor = []
        for sc, dxh, dsh in zip(scalings, dxh_a, dsh_a):
            if sc[0] == "s":
                lam = sc[3]
                cross = 0.5 * (dxh @ dsh + dsh @ dxh)
                rc_cor.append(sigma * mu * np.eye(lam.size) - np.diag(lam ** 2)
                              - cross)
            else:
                rc_cor.append(sigma * mu - sc[2] ** 2 - dxh * dsh)
        k_cor = _k_op(scalings, rc_cor)
        dy, dx_b, ds_b, dxh_b, dsh_b = _newton(
            g_list, blocks, scalings, mfac, rp, rd, k_cor)
        ap = min(1.0, FRACTION_TO_BOUNDARY * _max_step(blocks, scalings, dxh_b))
        ad = min(1.0, FRACTION_TO_BOUNDARY * _max_step(blocks, scalings, dsh_b))
        if ap < 1e-10 and ad < 1e-10:
            status = "numerical"
            break

        x_blocks = [xb + ap * d for xb, d in zip(x_blocks, dx_b)]
        s_blocks = [sb + ad * d for sb, d in zip(s_blocks, ds_b)]
        y = y + ad * dy
        rp = b - _apply_a(g_list, blocks, x_blocks)
        at_y = _apply_at(g_list, blocks, y)
        rd = [c - s - a for c, s, a in zip(c_list, s_blocks, at_y)]

    return SdpSolution(
        status=status,
        x=tuple(x_blocks),
        s=tuple(s_blocks),
        y=y,
        pobj=pobj,
        dobj=dobj,
        gap=gap,
        rel_gap=rel_gap,
        r_primal=rp_rel,
        r_dual=rd_rel,
        iterations=it,
    )


def write_sdpa(prob: SdpProblem, path_or_buf, comment: str = "") -> None:
    """Write the problem in SDPA sparse format (.dat-s).

    The file encodes the pair  max <F0, Y> s.t. <Fi, Y> = b_i, Y >= 0
    with F0 = -C and Fi = A_i, so an external solver's reported dual
    optimum equals the negated minimum of this problem.  Lin blocks are
    encoded as negative block sizes (diagonal blocks), all indices are
    1-based, and only upper-triangle entries are written.
    """
    g_list, c_list, b = prob.compiled()
    buf = io.StringIO()
    if comment:
        buf.write(f'"{comment}"\n')
    buf.write(f"{prob.m}\n")
    buf.write(f"{len(prob.blocks)}\n")
    buf.write(" ".join(str(size if kind == "s" else -size)
                       for kind, size in prob.blocks) + "\n")
    buf.write(" ".join(repr(float(v)) for v in b) + "\n")

    def emit(matno, blockno, kind, data):
        if kind == "s":
            for i, j in zip(*np.nonzero(data)):
                if i <= j:
                    buf.write(f"{matno} {blockno} {i + 1} {j + 1} {repr(float(data[i, j]))}\n")
        else:
            for i in np.nonzero(data)[0]:
                buf.write(f"{matno} {blockno} {i + 1} {i + 1} {repr(float(data[i]))}\n")

    for bi, ((kind, size), c) in enumerate(zip(prob.blocks, c_list)):
        emit(0, bi + 1, kind, -c)
    for r in range(prob.m):
        for bi, ((kind, size), g) in enumerate(zip(prob.blocks, g_list)):
            row = g.getrow(r)
            if row.nnz == 0:
                continue
            if kind == "s":
                mat = row.toarray().reshape(size, size)
            else:
                mat = row.toarray().ravel()
            emit(r + 1, bi + 1, kind, mat)

    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="ascii") as fh:
            fh.write(text)
