"""Dense primal-dual interior-point solver for block-diagonal SDPs.

Solves  min c.y  s.t.  A y = b,  G y >= h,  C_k + sum_j y_j B_kj >= 0
with Nesterov-Todd scaled search directions and a Mehrotra
predictor-corrector, from an infeasible start.  All 1x1 blocks and the
inequality slacks travel through a vectorized scalar path; only blocks
of size >= 2 pay for dense eigendecompositions.  The dual multipliers
(equality vector nu, inequality scalars, PSD block duals X_k) are part
of the result; the tradeoff module consumes them.

The Newton step eliminates (Delta X, Delta S) against the scaling
identity  Delta X + W Delta S W = sigma mu S^{-1} - X - corrector,
leaving the Schur system  M dy - A^T dnu = q,  A dy = r_e  with
M[i,j] = sum_k <B_ki, W_k B_kj W_k>, assembled blockwise with batched
matrix products over a per-block CSR of vectorized coefficient
matrices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse import csr_matrix

from dientropy.relax import BlockTemplate, SdpInstance

__all__ = ["SdpSolution", "solve"]

_CHUNK_FLOATS = 4_000_000  # cap on dense floats materialized per assembly chunk

# centering heuristics; tuned on degenerate moment-matrix instances where
# the optimal faces leave both cones rank-deficient and strict
# complementarity fails, which otherwise drags the endgame out to
# hundreds of short steps
_SIGMA_POW = 3.0
_SIGMA_FLOOR_STEP = 0.25  # predictor step below this forces extra centering
_SIGMA_FLOOR = 0.3
_GONDZIO_ROUNDS = 3
_GONDZIO_TRIGGER = 0.9
_GONDZIO_LO = 0.01
_GONDZIO_HI = 100.0
_GONDZIO_GAIN = 0.06
_GONDZIO_MIN_GAIN = 0.03


@dataclass
class SdpSolution:
    status: str  # optimal | near-optimal | infeasible | numerical-failure
    primal: float
    dual: float
    y: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    block_duals: list[np.ndarray]
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    wall_time: float = 0.0
    message: str = ""

    @property
    def kkt_residuals(self) -> tuple[float, float]:
        return (self.primal_residual, self.dual_residual)


class _Block:
    """Dense constant part plus CSR of vectorized coefficient matrices."""

    def __init__(self, tpl: BlockTemplate):
        self.size = d = tpl.size
        self.const = np.zeros((d, d))
        np.add.at(self.const, (tpl.const_rows, tpl.const_cols), tpl.const_vals)
        self.const = (self.const + self.const.T) / 2.0
        self.active = np.unique(tpl.vars) if len(tpl.vars) else np.empty(0, dtype=np.int64)
        local = {v: i for i, v in enumerate(self.active)}
        rows = np.array([local[v] for v in tpl.vars], dtype=np.int64)
        flat = tpl.rows * d + tpl.cols
        self.P = csr_matrix((tpl.coeffs, (rows, flat)), shape=(len(self.active), d * d))
        # coefficient matrices are sparse (a handful of cells each), so the
        # Schur conjugations run over their nonzeros; group variables by
        # nonzero count to batch the small products
        self.nz_r, self.nz_c = np.divmod(self.P.indices, d)
        self.nz_v = self.P.data
        lens = np.diff(self.P.indptr)
        self.groups = []
        for ln in np.unique(lens):
            vars_g = np.where(lens == ln)[0]
            pos = (self.P.indptr[vars_g][:, None] + np.arange(ln)[None, :]).ravel()
            self.groups.append((int(ln), vars_g, pos))

    def matrix(self, y: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        if len(self.active):
            out += (self.P.T @ y[self.active]).reshape(self.size, self.size)
        return (out + out.T) / 2.0

    def inner_with_coeffs(self, mat: np.ndarray) -> np.ndarray:
        """<B_j, mat> for each active variable j."""
        return self.P @ mat.reshape(-1)


def _sqrt_and_inv_sqrt(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    floor = max(vals[-1], 1.0) * 1e-14
    vals = np.clip(vals, floor, None)
    root = np.sqrt(vals)
    half = (vecs * root) @ vecs.T
    inv_half = (vecs / root) @ vecs.T
    inv = (vecs / vals) @ vecs.T
    return half, inv_half, inv


def _nt_scaling(S: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """W with W S W = X, plus S^{-1}."""
    s_half, s_inv_half, s_inv = _sqrt_and_inv_sqrt(S)
    t_half, _, _ = _sqrt_and_inv_sqrt(s_half @ X @ s_half)
    W = s_inv_half @ t_half @ s_inv_half
    return (W + W.T) / 2.0, s_inv


def _max_step(P: np.ndarray, D: np.ndarray) -> float:
    """Largest alpha <= 1 keeping P + alpha D positive definite."""
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return 0.0
    T = sla.solve_triangular(L, D, lower=True)
    T = sla.solve_triangular(L, T.T, lower=True)
    lam = np.linalg.eigvalsh((T + T.T) / 2.0)[0]
    if lam >= -1e-16:
        return 1.0
    return min(1.0, -1.0 / lam)


def _vec_max_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest alpha <= 1 keeping v + alpha dv positive, elementwise."""
    neg = dv < 0.0
    if not np.any(neg):
        return 1.0
    if np.any(v[neg] <= 0.0):
        return 0.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def _prune_equalities(
    A: np.ndarray, b: np.ndarray, scale: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Drop linearly dependent equality rows; detect inconsistency.

    Full-distribution constraint sets overlap the normalization row, so
    moment instances routinely arrive rank-deficient here.
    """
    p = A.shape[0]
    if p == 0:
        return A, b, np.empty(0, dtype=np.int64), True
    _, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * (diag[0] if len(diag) else 1.0)
    rank = int(np.sum(diag > tol))
    keep = np.sort(piv[:rank])
    if rank < p:
        y_ls, *_ = np.linalg.lstsq(A, b, rcond=None)
        if np.max(np.abs(A @ y_ls - b)) > 1e-9 * (1.0 + scale):
            return A[keep], b[keep], keep, False
    return A[keep], b[keep], keep, True


def _accumulate_schur(M: np.ndarray, bl: _Block, W: np.ndarray) -> None:
    """M[av, av] += <B_i, W B_j W> over the block's active variables.

    B_j = sum_l v_l E_{r_l c_l}, so W B_j W = (W[:, r] v) @ W[c, :]
    restricted to the block's nonzeros; that replaces two dense d^3
    conjugations per variable with an outer product per coefficient
    cell.
    """
    nav = len(bl.active)
    if nav == 0:
        return
    d = bl.size
    av = bl.active
    left = W[:, bl.nz_r] * bl.nz_v
    right = W[bl.nz_c, :]
    chunk = max(1, _CHUNK_FLOATS // (d * d))
    for ln, vars_g, pos in bl.groups:
        for s0 in range(0, len(vars_g), chunk):
            s1 = min(s0 + chunk, len(vars_g))
            k = s1 - s0
            ppos = pos[s0 * ln : s1 * ln]
            lhs = np.ascontiguousarray(left[:, ppos].reshape(d, k, ln).transpose(1, 0, 2))
            conj = np.matmul(lhs, right[ppos].reshape(k, ln, d))
            contrib = bl.P @ np.ascontiguousarray(conj.reshape(k, d * d).T)
            M[np.ix_(av, av[vars_g[s0:s1]])] += contrib


def solve(
    instance: SdpInstance,
    tol: float = 1e-8,
    max_iter: int = 200,
    callback=None,
) -> SdpSolution:
    """Run the interior-point iteration on one instance.

    Returns status "optimal" when the relative gap and both feasibility
    residuals fall below tol, "near-optimal" on a stall within 1e4 x tol,
    "infeasible" when the dual iterate certifies a diverging improving
    ray (or the equality system is inconsistent), and "numerical-failure"
    otherwise, always with the best iterate attached.  ``callback``, if
    given, receives a dict of iteration diagnostics once per iteration.
    """
    t0 = time.perf_counter()
    n = instance.n_vars
    sign = 1.0 if instance.minimize else -1.0

    c = np.zeros(n)
    if len(instance.objective.indices):
        c[list(instance.objective.indices)] = instance.objective.coeffs
    c *= sign
    # normalize the objective so the iteration dynamics are scale-free;
    # stopping reads the reported scale, so only the final iterate or two
    # can differ under a rescaled objective row
    objnorm = float(np.max(np.abs(c), initial=0.0)) or 1.0
    c = c / objnorm

    A_full = np.zeros((len(instance.equalities), n))
    b_full = np.zeros(len(instance.equalities))
    for i, row in enumerate(instance.equalities):
        A_full[i, list(row.indices)] = row.coeffs
        b_full[i] = row.rhs

    # blocks of size >= 2 keep dense algebra; 1x1 blocks and inequality
    # slacks share one vectorized scalar path
    mats: list[_Block] = []
    mat_src: list[int] = []
    scal_rows = []
    scal_src: list[tuple[str, int]] = []
    for k, tpl in enumerate(instance.blocks):
        if tpl.size == 1:
            scal_rows.append((tpl.vars, tpl.coeffs, float(np.sum(tpl.const_vals))))
            scal_src.append(("block", k))
        else:
            mats.append(_Block(tpl))
            mat_src.append(k)
    for i, row in enumerate(instance.inequalities):
        scal_rows.append(
            (
                np.array(row.indices, dtype=np.int64),
                np.array(row.coeffs, dtype=float),
                -float(row.rhs),
            )
        )
        scal_src.append(("ineq", i))
    m = len(scal_rows)
    G = np.zeros((m, n))
    h = np.zeros(m)
    for i, (idx, cf, h0) in enumerate(scal_rows):
        np.add.at(G[i], np.asarray(idx, dtype=np.int64), np.asarray(cf, dtype=float))
        h[i] = h0
    if not mats and m == 0:
        raise ValueError("instance has no conic blocks")

    scale = float(
        1.0
        + max(
            np.max(np.abs(b_full), initial=0.0),
            np.max(np.abs(c), initial=0.0),
            np.max(np.abs(h), initial=0.0),
            max((np.max(np.abs(bl.const), initial=0.0) for bl in mats), default=0.0),
        )
    )

    A, b, keep, consistent = _prune_equalities(A_full, b_full, scale)
    p = A.shape[0]

    def residuals(y, nu_kept, Xs, xs):
        rp = np.max(np.abs(A_full @ y - b_full), initial=0.0)
        for bl in mats:
            lam = np.linalg.eigvalsh(bl.matrix(y))[0]
            rp = max(rp, max(0.0, -lam))
        if m:
            rp = max(rp, max(0.0, -float(np.min(h + G @ y))))
        dres = c - (A.T @ nu_kept if p else 0.0)
        for bl, X in zip(mats, Xs):
            dres[bl.active] -= bl.inner_with_coeffs(X)
        if m:
            dres -= G.T @ xs
        rd = np.max(np.abs(dres), initial=0.0)
        return rp / scale, rd / scale

    def finish(status, y, nu_kept, Xs, xs, it, msg=""):
        nu = np.zeros(len(instance.equalities))
        if len(keep):
            nu[keep] = nu_kept
        sc_p = float(c @ y)
        sc_d = (
            float(b_full @ nu)
            - sum(float(np.sum(bl.const * X)) for bl, X in zip(mats, Xs))
            - float(h @ xs)
        )
        primal = sign * sc_p * objnorm + instance.obj_const
        dualv = sign * sc_d * objnorm + instance.obj_const
        gap = abs(primal - dualv) / (1.0 + abs(primal))
        # inexact iterates can push the raw dual past the primal; report
        # the conservative side so the dual stays a one-sided certificate
        sc_d = min(sc_d, sc_p)
        dualv = sign * sc_d * objnorm + instance.obj_const
        rp, rd = residuals(y, nu[keep] if len(keep) else np.empty(0), Xs, xs)
        duals: list = [None] * len(instance.blocks)
        for bl_k, X in zip(mat_src, Xs):
            duals[bl_k] = sign * objnorm * X
        ineq_mult = np.zeros(len(instance.inequalities))
        for (kind, src), xi in zip(scal_src, xs):
            if kind == "block":
                duals[src] = sign * objnorm * np.array([[xi]])
            else:
                ineq_mult[src] = sign * objnorm * xi
        return SdpSolution(
            status=status,
            primal=primal,
            dual=dualv,
            y=y.copy(),
            eq_multipliers=sign * objnorm * nu,
            ineq_multipliers=ineq_mult,
            block_duals=duals,
            gap=gap,
            primal_residual=rp,
            dual_residual=rd,
            iterations=it,
            wall_time=time.perf_counter() - t0,
            message=msg,
        )

    if not consistent:
        return finish(
            "infeasible",
            np.zeros(n),
            np.zeros(p),
            [np.eye(bl.size) for bl in mats],
            np.ones(m),
            0,
            "inconsistent equalities",
        )

    y = np.linalg.lstsq(A, b, rcond=None)[0] if p else np.zeros(n)
    beta = scale
    Ss = [beta * np.eye(bl.size) for bl in mats]
    Xs = [beta * np.eye(bl.size) for bl in mats]
    s = beta * np.ones(m)
    x = beta * np.ones(m)
    nu = np.zeros(p)
    N = sum(bl.size for bl in mats) + m

    def lin_residuals(y_, nu_, Ss_, Xs_, s_, x_):
        Rp_ = [bl.matrix(y_) - S_ for bl, S_ in zip(mats, Ss_)]
        rps_ = h + G @ y_ - s_ if m else np.zeros(0)
        r_e_ = b - A @ y_ if p else np.zeros(0)
        r_d_ = c - (A.T @ nu_ if p else 0.0)
        for bl, X_ in zip(mats, Xs_):
            r_d_[bl.active] -= bl.inner_with_coeffs(X_)
        if m:
            r_d_ -= G.T @ x_
        lin_ = max(
            max((np.max(np.abs(R)) for R in Rp_), default=0.0),
            np.max(np.abs(rps_), initial=0.0),
            np.max(np.abs(r_e_), initial=0.0),
            np.max(np.abs(r_d_), initial=0.0),
        )
        return Rp_, rps_, r_e_, r_d_, lin_

    best = None
    best_score = np.inf
    score_hist = []
    status, msg = "numerical-failure", "iteration cap reached"
    it = 0
    tiny_steps = 0
    # the sigma floor rescues chronically short steps on degenerate
    # interior faces, but on boundary-degenerate optima the recentering
    # step itself collapses; latch the floor off when that happens and
    # let the plain predictor-corrector polish the tail
    floor_on = True
    floor_fail = 0
    last_ap = last_ad = last_sigma = float("nan")
    last_af_p = last_af_d = float("nan")
    last_halvings = 0

    for it in range(1, max_iter + 1):
        Rp, rps, r_e, r_d, lin_inf = lin_residuals(y, nu, Ss, Xs, s, x)

        mu = (sum(float(np.sum(X * S)) for X, S in zip(Xs, Ss)) + float(x @ s)) / N
        pval = float(c @ y)
        dval = (
            float(b @ nu)
            - sum(float(np.sum(bl.const * X)) for bl, X in zip(mats, Xs))
            - float(h @ x)
        )
        # measure the gap on the reported objective, not the normalized
        # one; a rescaled objective otherwise loosens the stopping test
        # by exactly the normalization factor
        p_rep = sign * pval * objnorm + instance.obj_const
        d_rep = sign * dval * objnorm + instance.obj_const
        gap = abs(p_rep - d_rep) / (1.0 + abs(p_rep))
        rp_rel = (
            max(
                np.max(np.abs(r_e), initial=0.0),
                max((np.max(np.abs(R)) for R in Rp), default=0.0),
                np.max(np.abs(rps), initial=0.0),
            )
            / scale
        )
        rd_rel = np.max(np.abs(r_d), initial=0.0) / scale

        score = max(gap, rp_rel, rd_rel)
        if score < best_score:
            best_score = score
            best = (y.copy(), nu.copy(), [X.copy() for X in Xs], x.copy())

        if callback is not None:
            callback(
                {
                    "iteration": it,
                    "mu": mu,
                    "gap": gap,
                    "primal_residual": rp_rel,
                    "dual_residual": rd_rel,
                    "primal": p_rep,
                    "dual": d_rep,
                    "step_primal": last_ap,
                    "step_dual": last_ad,
                    "step_affine_primal": last_af_p,
                    "step_affine_dual": last_af_d,
                    "sigma": last_sigma,
                    "halvings": last_halvings,
                }
            )

        if gap <= tol and rp_rel <= tol and rd_rel <= tol:
            return finish("optimal", y, nu, Xs, x, it)
        # Farkas test: (nu, Xs, x)/dval approximates a dual improving ray.
        # ||A^T nu + <B, X> + G^T x|| / dval small with the cone variables
        # nonnegative certifies that no primal point exists, up to that
        # residual.
        hom_res = np.max(np.abs(c - r_d), initial=0.0)
        if dval > 1e4 * scale and hom_res <= 1e-6 * dval and rp_rel > 100.0 * tol:
            status, msg = "infeasible", "dual improving ray found"
            break
        if pval < -1e10 * scale:
            status, msg = "numerical-failure", "primal objective diverging"
            break
        score_hist.append(best_score)
        near = best_score <= min(1e4 * tol, 1e-2)
        if it >= 25 and best_score > 0.97 * score_hist[-21] and near:
            status, msg = "stalled", "progress stalled near optimum"
            break
        if it >= 45 and best_score > (1.0 - 1e-3) * score_hist[-41]:
            status, msg = "stalled", "progress stalled"
            break

        try:
            Ws, S_invs = [], []
            for S, X in zip(Ss, Xs):
                W, S_inv = _nt_scaling(S, X)
                Ws.append(W)
                S_invs.append(S_inv)
            w2 = x / s if m else np.zeros(0)

            M = np.zeros((n, n))
            for bl, W in zip(mats, Ws):
                _accumulate_schur(M, bl, W)
            if m:
                M += G.T @ (G * w2[:, None])
            M = (M + M.T) / 2.0
            # Jacobi equilibration plus iterative refinement keeps the
            # Newton direction usable when the scaling spreads M badly.
            # The diagonal shift grows only as far as the factorization
            # demands.
            dscale = np.sqrt(np.clip(np.diag(M), 1e-300, None))
            Mh0 = M / dscale[:, None] / dscale[None, :]
            shift = 1e-14
            while True:
                Mh = Mh0.copy()
                Mh[np.diag_indices_from(Mh)] += shift
                try:
                    cho = sla.cho_factor(Mh, check_finite=False)
                    break
                except sla.LinAlgError:
                    shift *= 100.0
                    if shift > 1e-4:
                        raise

            def msolve(rhs):
                out = sla.cho_solve(cho, (rhs.T / dscale).T, check_finite=False)
                out = (out.T / dscale).T
                rhs_inf = np.max(np.abs(rhs), initial=0.0)
                for _ in range(3):
                    resid = rhs - M @ out
                    if np.max(np.abs(resid), initial=0.0) <= 1e-13 * max(1.0, rhs_inf):
                        break
                    ref = sla.cho_solve(cho, (resid.T / dscale).T, check_finite=False)
                    out = out + (ref.T / dscale).T
                return out

            if p:
                T2 = msolve(A.T)
                AMA = A @ T2
                AMA = (AMA + AMA.T) / 2.0
                try:
                    cho_eq = sla.cho_factor(AMA, check_finite=False)

                    def eq_solve(r):
                        return sla.cho_solve(cho_eq, r, check_finite=False)

                except sla.LinAlgError:
                    # nearly singular reduced system: eigenvalue pseudo-solve
                    w_eq, V_eq = np.linalg.eigh(AMA)
                    w_inv = np.where(
                        w_eq > 1e-14 * max(float(w_eq[-1]), 1e-300),
                        1.0 / np.where(w_eq > 0, w_eq, 1.0),
                        0.0,
                    )

                    def eq_solve(r):
                        return V_eq @ (w_inv * (V_eq.T @ r))

            def newton(Rcs, rcs):
                q = -r_d.copy()
                for bl, W, Rc, R in zip(mats, Ws, Rcs, Rp):
                    q[bl.active] += bl.inner_with_coeffs(Rc - W @ R @ W)
                if m:
                    q += G.T @ (rcs - w2 * rps)
                if p:
                    t1 = msolve(q)
                    dnu = eq_solve(r_e - A @ t1)
                    dy = t1 + T2 @ dnu
                else:
                    dnu = np.zeros(0)
                    dy = msolve(q)
                dSs, dXs = [], []
                for bl, W, Rc, R in zip(mats, Ws, Rcs, Rp):
                    dS = R.copy()
                    if len(bl.active):
                        dS = dS + (bl.P.T @ dy[bl.active]).reshape(bl.size, bl.size)
                    dS = (dS + dS.T) / 2.0
                    dX = Rc - W @ dS @ W
                    dXs.append((dX + dX.T) / 2.0)
                    dSs.append(dS)
                ds = rps + G @ dy if m else np.zeros(0)
                dx = rcs - w2 * ds if m else np.zeros(0)
                return dy, dnu, dSs, dXs, ds, dx

            # predictor
            dy_a, dnu_a, dSs_a, dXs_a, ds_a, dx_a = newton([-X for X in Xs], -x)
            af_p = min(
                min((_max_step(S, dS) for S, dS in zip(Ss, dSs_a)), default=1.0),
                _vec_max_step(s, ds_a) if m else 1.0,
            )
            af_d = min(
                min((_max_step(X, dX) for X, dX in zip(Xs, dXs_a)), default=1.0),
                _vec_max_step(x, dx_a) if m else 1.0,
            )
            mu_aff = (
                sum(
                    float(np.sum((X + af_d * dX) * (S + af_p * dS)))
                    for X, S, dX, dS in zip(Xs, Ss, dXs_a, dSs_a)
                )
                + float((x + af_d * dx_a) @ (s + af_p * ds_a))
            ) / N
            sigma_raw = min(1.0, max(1e-8, (max(mu_aff, 0.0) / mu) ** _SIGMA_POW))
            sigma = sigma_raw
            floored = False
            if floor_on and min(af_p, af_d) < _SIGMA_FLOOR_STEP:
                floored = sigma < _SIGMA_FLOOR
                sigma = max(sigma, _SIGMA_FLOOR)

            # corrector: recenter plus Mehrotra second-order term
            def corr_target(sig):
                R = []
                for X, S_inv, dX, dS in zip(Xs, S_invs, dXs_a, dSs_a):
                    corr = dX @ dS @ S_inv
                    R.append(sig * mu * S_inv - X - (corr + corr.T) / 2.0)
                r = sig * mu / s - x - dx_a * ds_a / s if m else np.zeros(0)
                return R, r

            def step_pair(dSs_, dXs_, ds_, dx_):
                ap_ = min(
                    min((_max_step(S, dS) for S, dS in zip(Ss, dSs_)), default=1.0),
                    _vec_max_step(s, ds_) if m else 1.0,
                )
                ad_ = min(
                    min((_max_step(X, dX) for X, dX in zip(Xs, dXs_)), default=1.0),
                    _vec_max_step(x, dx_) if m else 1.0,
                )
                return ap_, ad_

            Rcs, rcs = corr_target(sigma)
            dy, dnu, dSs, dXs, ds, dx = newton(Rcs, rcs)
            ap, ad = step_pair(dSs, dXs, ds, dx)
            if floored and min(ap, ad) < 0.01:
                # the forced recentering collapsed: on boundary-degenerate
                # faces the central path is not approachable at this mu,
                # so retry the plain corrector and keep the longer step
                Rcs2, rcs2 = corr_target(sigma_raw)
                dirs2 = newton(Rcs2, rcs2)
                ap2, ad2 = step_pair(dirs2[2], dirs2[3], dirs2[4], dirs2[5])
                if min(ap2, ad2) > min(ap, ad):
                    dy, dnu, dSs, dXs, ds, dx = dirs2
                    ap, ad, Rcs, rcs = ap2, ad2, Rcs2, rcs2
                    sigma = sigma_raw
                    floored = False
            if min(ap, ad) < 0.05 * min(af_p, af_d) or max(ap, ad) < 1e-3:
                # second-order term hurt the step; retake a plain
                # centering direction unless that collapses outright,
                # which happens on boundary-degenerate faces
                sig_c = max(sigma, 0.5)
                Rcs2 = [sig_c * mu * S_inv - X for X, S_inv in zip(Xs, S_invs)]
                rcs2 = sig_c * mu / s - x if m else np.zeros(0)
                dirs2 = newton(Rcs2, rcs2)
                ap2, ad2 = step_pair(dirs2[2], dirs2[3], dirs2[4], dirs2[5])
                if min(ap2, ad2) >= 0.01 or min(ap2, ad2) > min(ap, ad):
                    dy, dnu, dSs, dXs, ds, dx = dirs2
                    ap, ad, Rcs, rcs = ap2, ad2, Rcs2, rcs2
                    sigma = sig_c

            # extra centrality correctors reusing the factorization: clip
            # outlier eigenvalues of the trial complementarity toward the
            # trial barrier parameter and re-solve; kept only when the
            # step actually lengthens.  Degenerate optimal faces otherwise
            # force a long tail of short steps.
            for _ in range(_GONDZIO_ROUNDS):
                if min(ap, ad) > _GONDZIO_TRIGGER:
                    break
                tp = min(1.0, ap + 0.2)
                td = min(1.0, ad + 0.2)
                trial_tr = 0.0
                trial_pairs = []
                for X, S, dX, dS in zip(Xs, Ss, dXs, dSs):
                    Xt = X + td * dX
                    St = S + tp * dS
                    E = Xt @ St
                    E = (E + E.T) / 2.0
                    trial_pairs.append(E)
                    trial_tr += float(np.trace(E))
                st_t = s + tp * ds if m else s
                xt_t = x + td * dx if m else x
                if m:
                    trial_tr += float(xt_t @ st_t)
                mu_t = max(trial_tr / N, 1e-300)
                lo, hi = _GONDZIO_LO * mu_t, _GONDZIO_HI * mu_t
                Rcs2 = []
                for E, S_inv, Rc in zip(trial_pairs, S_invs, Rcs):
                    lam, U = np.linalg.eigh(E)
                    defect = np.clip(lam, lo, hi) - lam
                    if np.max(np.abs(defect), initial=0.0) == 0.0:
                        Rcs2.append(Rc)
                        continue
                    D = (U * defect) @ U.T
                    add = D @ S_inv
                    Rcs2.append(Rc + (add + add.T) / 2.0)
                if m:
                    prod = xt_t * st_t
                    rcs2 = rcs + (np.clip(prod, lo, hi) - prod) / s
                else:
                    rcs2 = rcs
                dirs2 = newton(Rcs2, rcs2)
                ap2 = min(
                    min((_max_step(S, dS) for S, dS in zip(Ss, dirs2[2])), default=1.0),
                    _vec_max_step(s, dirs2[4]) if m else 1.0,
                )
                ad2 = min(
                    min((_max_step(X, dX) for X, dX in zip(Xs, dirs2[3])), default=1.0),
                    _vec_max_step(x, dirs2[5]) if m else 1.0,
                )
                if (
                    ap2 + ad2 >= ap + ad + _GONDZIO_GAIN
                    or min(ap2, ad2) >= min(ap, ad) + _GONDZIO_MIN_GAIN
                ):
                    dy, dnu, dSs, dXs, ds, dx = dirs2
                    ap, ad, Rcs, rcs = ap2, ad2, Rcs2, rcs2
                else:
                    break
        except (np.linalg.LinAlgError, sla.LinAlgError):
            status, msg = "numerical-failure", "factorization failed"
            break

        # near the end longer steps are safe and degeneracy makes them
        # necessary; gap is relative, so the schedule is scale-free
        ap = min(1.0, 0.98 * ap)
        ad = min(1.0, 0.98 * ad)

        # the linear residuals are exact linear functions of the step, so
        # they must shrink roughly like (1 - alpha); a step that breaks
        # that came from a bad factorization and gets halved away.  Once
        # the residuals sit far below tolerance any jump they could take
        # is harmless, so the check stands down instead of throttling the
        # endgame.
        guard_off = lin_inf <= 0.01 * tol * scale

        def guarded(dy_, dnu_, dSs_, dXs_, ds_, dx_, ap_, ad_):
            nonlocal last_halvings
            for _ in range(6):
                y2 = y + ap_ * dy_
                nu2 = nu + ad_ * dnu_
                Ss2 = [S + ap_ * dS for S, dS in zip(Ss, dSs_)]
                Xs2 = [X + ad_ * dX for X, dX in zip(Xs, dXs_)]
                s2 = s + ap_ * ds_ if m else s
                x2 = x + ad_ * dx_ if m else x
                if guard_off:
                    return ap_, ad_, y2, nu2, Ss2, Xs2, s2, x2
                new_lin = lin_residuals(y2, nu2, Ss2, Xs2, s2, x2)[4]
                cand_max = max(
                    np.max(np.abs(y2), initial=0.0),
                    np.max(np.abs(nu2), initial=0.0),
                    max((np.max(np.abs(Xm)) for Xm in Xs2), default=0.0),
                    max((np.max(np.abs(Sm)) for Sm in Ss2), default=0.0),
                    np.max(np.abs(x2), initial=0.0),
                    np.max(np.abs(s2), initial=0.0),
                )
                slack = 1e-11 * scale + 1e-13 * cand_max
                if np.isfinite(new_lin) and new_lin <= 2.0 * (
                    1.0 - min(ap_, ad_)
                ) * lin_inf + slack:
                    return ap_, ad_, y2, nu2, Ss2, Xs2, s2, x2
                ap_ *= 0.5
                ad_ *= 0.5
                last_halvings += 1
            return None

        last_halvings = 0
        cand = guarded(dy, dnu, dSs, dXs, ds, dx, ap, ad)
        if cand is None:
            # bad direction: a pure centering step from the same
            # factorization targets a better-conditioned point
            sigma = 1.0
            try:
                Rcs = [mu * S_inv - X for X, S_inv in zip(Xs, S_invs)]
                rcs = mu / s - x if m else np.zeros(0)
                dy, dnu, dSs, dXs, ds, dx = newton(Rcs, rcs)
            except (np.linalg.LinAlgError, sla.LinAlgError):
                dy = None
            if dy is not None:
                ap = min(
                    1.0,
                    0.98
                    * min(
                        min(
                            (_max_step(S, dS) for S, dS in zip(Ss, dSs)),
                            default=1.0,
                        ),
                        _vec_max_step(s, ds) if m else 1.0,
                    ),
                )
                ad = min(
                    1.0,
                    0.98
                    * min(
                        min(
                            (_max_step(X, dX) for X, dX in zip(Xs, dXs)),
                            default=1.0,
                        ),
                        _vec_max_step(x, dx) if m else 1.0,
                    ),
                )
                cand = guarded(dy, dnu, dSs, dXs, ds, dx, ap, ad)
        if cand is None:
            # deterministic iteration: retrying the same state cannot help
            status, msg = "numerical-failure", "step collapsed"
            break
        ap, ad, y2, nu2, Ss2, Xs2, s2, x2 = cand
        last_ap, last_ad, last_sigma = ap, ad, sigma
        last_af_p, last_af_d = af_p, af_d
        if floored:
            if min(ap, ad) < 0.01:
                floor_fail += 1
                if floor_fail >= 2:
                    floor_on = False
            else:
                floor_fail = 0
        if max(ap, ad) < 1e-3:
            tiny_steps += 1
            if tiny_steps >= 10:
                status, msg = "numerical-failure", "step collapsed"
                break
        else:
            tiny_steps = 0

        y, nu, Ss, Xs = y2, nu2, Ss2, Xs2
        if m:
            s, x = s2, x2
        if not np.all(np.isfinite(y)):
            status, msg = "numerical-failure", "nonfinite iterate"
            break

    yb, nub, Xsb, xb = best if best is not None else (y, nu, Xs, x)
    if status == "infeasible":
        return finish("infeasible", yb, nub, Xsb, xb, it, msg)
    # a run that broke down while the dual objective diverged with a small
    # homogeneous residual still certifies infeasibility
    if (
        it > 0
        and dval > 1e3 * scale
        and hom_res <= 1e-5 * dval
        and rp_rel > 100.0 * tol
    ):
        return finish(
            "infeasible", yb, nub, Xsb, xb, it, "dual improving ray found"
        )
    if best_score <= min(1e4 * tol, 1e-2):
        return finish("near-optimal", yb, nub, Xsb, xb, it, msg)
    return finish("numerical-failure", yb, nub, Xsb, xb, it, msg)
