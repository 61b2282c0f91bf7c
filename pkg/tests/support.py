"""Shared helpers for the test suite.

Holds the CHSH game constraint used across modules, a generator of small
random LMI instances, and an independent penalty-method oracle for
checking the interior-point solver.  The oracle works on raw matrices
captured at generation time so it shares no evaluation code with the
library.
"""

import numpy as np
import scipy.optimize

from dientropy.ncpoly import meas
from dientropy.relax import BlockTemplate, LinearRow, SdpInstance, StatConstraint

BOX = 10.0  # |y_j| bound keeping random instances bounded


def chsh_game_constraint(bound, relation=">="):
    """Score of the CHSH game with uniform inputs: win iff a xor b = x and y."""
    terms = []
    for x in range(2):
        for y in range(2):
            for a in range(2):
                b = a ^ (x & y)
                terms.append(((("A", x, a), ("B", y, b)), 0.25))
    return StatConstraint("bell", tuple(terms), bound, relation, label="chsh")


def chsh_game_polynomial(sc):
    """Same score as an operator polynomial, second outcomes expanded."""
    one = sc.word()

    def proj(party, x, a):
        if a == 1:
            return one - sc.word(meas(party, x, 0))
        return sc.word(meas(party, x, a))

    total = None
    for x in range(2):
        for y in range(2):
            for a in range(2):
                term = 0.25 * (proj("A", x, a) * proj("B", y, a ^ (x & y)))
                total = term if total is None else total + term
    return total


def _template_from_dense(C, Bs, label):
    rows, cols, vars_, coeffs = [], [], [], []
    for j, Bj in enumerate(Bs):
        r, c = np.nonzero(Bj)
        rows.extend(r.tolist())
        cols.extend(c.tolist())
        vars_.extend([j] * len(r))
        coeffs.extend(Bj[r, c].tolist())
    cr, cc = np.nonzero(C)
    return BlockTemplate(
        size=C.shape[0],
        rows=np.array(rows, dtype=np.int64),
        cols=np.array(cols, dtype=np.int64),
        vars=np.array(vars_, dtype=np.int64),
        coeffs=np.array(coeffs, dtype=float),
        const_rows=cr.astype(np.int64),
        const_cols=cc.astype(np.int64),
        const_vals=C[cr, cc].astype(float),
        label=label,
    )


def random_sdp(rng):
    """Small strictly feasible minimization instance plus raw matrices.

    y = 0 is strictly feasible by construction: every block constant is
    positive definite with margin 0.3, the optional equality has rhs 0,
    and box rows keep |y_j| <= BOX so the optimum is finite.
    """
    n = int(rng.integers(2, 9))
    templates = []
    raw_blocks = []
    for k in range(int(rng.integers(1, 3))):
        d = int(rng.integers(2, 7))
        R = 0.6 * rng.standard_normal((d, d))
        C = R @ R.T + 0.3 * np.eye(d)
        Bs = []
        for _ in range(n):
            if n > 3 and rng.random() < 0.3:
                Bs.append(np.zeros((d, d)))
                continue
            Bj = rng.standard_normal((d, d))
            Bs.append((Bj + Bj.T) / 2.0)
        templates.append(_template_from_dense(C, Bs, f"rand{k}"))
        raw_blocks.append((C, Bs))
    c = rng.standard_normal(n)
    eqs = []
    raw_eqs = []
    if rng.random() < 0.5:
        a = rng.standard_normal(n)
        eqs.append(LinearRow(tuple(range(n)), tuple(a.tolist()), 0.0, "pin"))
        raw_eqs.append(a)
    ineqs = []
    for j in range(n):
        ineqs.append(LinearRow((j,), (-1.0,), -BOX, f"ub{j}"))
        ineqs.append(LinearRow((j,), (1.0,), -BOX, f"lb{j}"))
    inst = SdpInstance(
        n_vars=n,
        blocks=tuple(templates),
        equalities=tuple(eqs),
        inequalities=tuple(ineqs),
        objective=LinearRow(tuple(range(n)), tuple(c.tolist()), 0.0, "obj"),
        minimize=True,
        obj_const=0.0,
        var_words=None,
    )
    return inst, {"n": n, "c": c, "blocks": raw_blocks, "eqs": raw_eqs}


def penalty_oracle(raw, outer=18):
    """Augmented-Lagrangian minimization with analytic gradients.

    The penalty weight grows geometrically so early subproblems stay
    smooth for L-BFGS-B; multiplier updates make feasibility exact at a
    moderate final weight.  Each outer value is measured at a feasible
    point recovered by blending toward the strictly feasible origin
    (after projecting onto the equality), so the reported minimum is a
    true upper bound on the optimum up to the blend tolerance.
    """
    n, c = raw["n"], raw["c"]
    lams = [np.zeros_like(C) for C, _ in raw["blocks"]]
    lam_eq = [0.0 for _ in raw["eqs"]]
    rho = 10.0

    def slack(z, C, Bs):
        S = C.copy()
        for j, Bj in enumerate(Bs):
            S += z[j] * Bj
        return S

    def shifted(Lam, S):
        # projection of Lam - rho S onto the PSD cone
        lam, U = np.linalg.eigh(Lam - rho * S)
        pos = np.maximum(lam, 0.0)
        return (U * pos) @ U.T

    def merit(y):
        val = float(c @ y)
        grad = c.copy()
        for (C, Bs), Lam in zip(raw["blocks"], lams):
            P = shifted(Lam, slack(y, C, Bs))
            val += (float(np.sum(P * P)) - float(np.sum(Lam * Lam))) / (2.0 * rho)
            for j, Bj in enumerate(Bs):
                grad[j] -= float(np.sum(P * Bj))
        for k, a in enumerate(raw["eqs"]):
            r = float(a @ y)
            val += lam_eq[k] * r + 0.5 * rho * r * r
            grad += (lam_eq[k] + rho * r) * a
        return val, grad

    def feasible_value(z):
        for a in raw["eqs"]:
            z = z - a * (float(a @ z) / float(a @ a))
        z = np.clip(z, -BOX, BOX)

        def ok(w):
            return all(
                np.linalg.eigvalsh(slack(w, C, Bs))[0] >= 0.0
                for C, Bs in raw["blocks"]
            )

        alpha = 0.0  # blend weight toward the strictly feasible origin
        if not ok(z):
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if ok((1.0 - mid) * z):
                    hi = mid
                else:
                    lo = mid
            alpha = hi
        return float(c @ ((1.0 - alpha) * z))

    y = np.zeros(n)
    upper = feasible_value(y)
    for _ in range(outer):
        res = scipy.optimize.minimize(
            merit,
            y,
            jac=True,
            method="L-BFGS-B",
            bounds=[(-BOX, BOX)] * n,
            options={"maxiter": 2000, "ftol": 1e-18, "gtol": 1e-12},
        )
        y = res.x
        upper = min(upper, feasible_value(y))
        for i, (C, Bs) in enumerate(raw["blocks"]):
            lams[i] = shifted(lams[i], slack(y, C, Bs))
        for k, a in enumerate(raw["eqs"]):
            lam_eq[k] += rho * float(a @ y)
        rho = min(4.0 * rho, 1e6)
    return upper
