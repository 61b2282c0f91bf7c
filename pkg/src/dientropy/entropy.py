"""Certified entropy bounds: variational node objectives, fan-out, recombination.

The conditional von Neumann entropy of the key outcome against an
adversary holding a purification is lower-bounded by a Gauss-Radau sum

    H  >=  c_m + sum_{i<m} (w_i / (t_i ln 2)) * s_i,

where each s_i is the infimum of a node polynomial over all commuting
operator strategies compatible with the constraints, itself bounded from
below by a moment relaxation.  The endpoint node t_m = 1 is absorbed
into the constant c_m and never generates a solve.

Each interior node introduces its own set of free Z letters and is an
independent SDP; solving them per node instead of jointly only lowers
the bound, so the result stays certified.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .devices import Distribution, conditional_entropy
from .ncpoly import NCPolynomial, Scenario, zsym
from .quadrature import QuadratureRule, gauss_radau
from .relax import StatConstraint, build_relaxation, generate_basis
from .sdpsolver import solve

__all__ = [
    "EntropyTarget",
    "NodeRecord",
    "RateResult",
    "ScenarioInfeasibleError",
    "NodeSolveError",
    "cm_constant",
    "node_objective",
    "entropy_bound",
    "devetak_winter_rate",
    "optimal_preprocessing",
]

LN2 = math.log(2.0)

_KINDS = ("local", "global", "input-averaged")


class ScenarioInfeasibleError(ValueError):
    """The statistical constraints admit no quantum model at this level."""


class NodeSolveError(RuntimeError):
    """A node SDP failed numerically; ``partial`` holds the records so far."""

    def __init__(self, message: str, partial: "RateResult"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class EntropyTarget:
    """What is being bounded: whose outcome, at which inputs, with what noise.

    kind "local" bounds H(A|E) at Alice's input ``x_star``; "global" bounds
    H(AB|E) at (``x_star``, ``y_star``); "input-averaged" bounds the mean of
    H(A|E) over Alice's inputs weighted by ``input_weights``.  ``flip`` is
    the probability of flipping Alice's (binary) key bit before anything
    else sees it.
    """

    kind: str = "local"
    x_star: int = 0
    y_star: int | None = None
    input_weights: tuple[float, ...] | None = None
    flip: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        if not 0.0 <= self.flip <= 0.5:
            raise ValueError("flip probability must lie in [0, 1/2]")
        if self.kind == "global" and self.y_star is None:
            raise ValueError("global target needs y_star")
        if self.kind == "input-averaged":
            if self.input_weights is None:
                raise ValueError("input-averaged target needs input weights")
            w = tuple(float(v) for v in self.input_weights)
            if any(v < 0.0 for v in w) or abs(sum(w) - 1.0) > 1e-12:
                raise ValueError("input weights must be a probability vector")
            object.__setattr__(self, "input_weights", w)


@dataclass(frozen=True)
class NodeRecord:
    t: float
    weight: float
    s_value: float
    status: str
    gap: float
    wall_time: float


@dataclass(frozen=True)
class RateResult:
    """Recombined bound in bits plus the per-node evidence behind it."""

    bound: float
    c_m: float
    nodes: tuple[NodeRecord, ...]
    wall_time: float

    def recombined(self) -> float:
        total = self.c_m
        for rec in self.nodes:
            total += rec.weight / (rec.t * LN2) * rec.s_value
        return total


def cm_constant(rule: QuadratureRule) -> float:
    """-1/(m^2 ln 2) + sum_i w_i / (t_i ln 2); zero for the one-node rule."""
    acc = -1.0 / (rule.m * rule.m)
    for t, w in zip(rule.nodes, rule.weights):
        acc += w / t
    return acc / LN2


def _effective_key_projector(scenario: Scenario, x: int, a: int, q: float) -> NCPolynomial:
    poly = scenario.projector("A", x, a)
    if q > 0.0:
        if scenario.n_outcomes("A", x) != 2:
            raise ValueError("bit flipping needs a binary key outcome")
        poly = (1.0 - q) * poly + q * scenario.projector("A", x, a ^ 1)
    return poly


def key_groups(scenario: Scenario, target: EntropyTarget):
    """(weight, measurement polynomial) per Z letter, preprocessing included."""
    q = target.flip
    if target.kind == "local":
        for a in range(scenario.n_outcomes("A", target.x_star)):
            yield 1.0, _effective_key_projector(scenario, target.x_star, a, q)
    elif target.kind == "global":
        for a in range(scenario.n_outcomes("A", target.x_star)):
            pa = _effective_key_projector(scenario, target.x_star, a, q)
            for b in range(scenario.n_outcomes("B", target.y_star)):
                yield 1.0, pa * scenario.projector("B", target.y_star, b)
    else:
        for x, px in enumerate(target.input_weights):
            for a in range(scenario.n_outcomes("A", x)):
                yield px, _effective_key_projector(scenario, x, a, q)


def z_letter_count(scenario: Scenario, target: EntropyTarget) -> int:
    return sum(1 for _ in key_groups(scenario, target))


def node_objective(
    scenario: Scenario, target: EntropyTarget, t: float, z_scale: float = 1.0
) -> NCPolynomial:
    """sum_k weight_k [ M_k (Z_k + Z_k* + (1-t) Z_k* Z_k) + t Z_k Z_k* ].

    ``scenario`` must declare one Z letter per key group (see
    :func:`z_letter_count`); t must be an interior node, the endpoint is
    handled by the constant.

    ``z_scale`` substitutes Z_k -> z_scale * Z_k.  The optimum is
    unchanged as long as the norm cap is divided by the same factor, but
    capping the rescaled letters at 1 keeps all moments on one scale; at
    the extreme nodes the raw cap exceeds 90 and the spread breaks the
    solver.
    """
    if not 0.0 < t < 1.0:
        raise ValueError("endpoint node generates no objective; t must be interior")
    a1 = z_scale
    a2 = z_scale * z_scale
    total = None
    for k, (weight, mpoly) in enumerate(key_groups(scenario, target)):
        z = scenario.word(zsym(k))
        zs = scenario.word(zsym(k, star=True))
        term = mpoly * (a1 * (z + zs) + ((1.0 - t) * a2) * (zs * z)) + (t * a2) * (z * zs)
        term = weight * term
        total = term if total is None else total + term
    if total is None:
        raise ValueError("target yields no key operators")
    return total


def node_norm_bound(t: float) -> float:
    """Operator-norm cap on the optimal Z at an interior node."""
    return 1.5 * max(1.0 / t, 1.0 / (1.0 - t))


def entropy_bound(
    scenario: Scenario,
    target: EntropyTarget,
    stats: list[StatConstraint],
    m: int,
    level: int = 2,
    extras=(),
    *,
    tol: float = 1e-8,
    max_iter: int = 300,
    workers: int | None = None,
    verbose: bool = False,
) -> RateResult:
    """Certified lower bound (bits) on the targeted conditional entropy.

    Builds one moment relaxation per interior quadrature node over a
    shared monomial basis, solves them (optionally in ``workers``
    threads), and recombines with the quadrature weights.  The dual
    objective value is used for each node, so every reported bound is on
    the safe side of the solver tolerance.

    Raises ScenarioInfeasibleError when any node reports infeasibility
    (the constraints admit no quantum model) and NodeSolveError, with the
    partial record attached, on numerical failure.
    """
    if m < 1:
        raise ValueError("m must be positive")
    t_start = time.perf_counter()
    rule = gauss_radau(m)
    c_m = cm_constant(rule)
    if m == 1:
        return RateResult(bound=c_m, c_m=c_m, nodes=(), wall_time=time.perf_counter() - t_start)

    sc = replace(scenario, n_z=z_letter_count(scenario, target))
    basis = generate_basis(sc, level, extras)

    def run_node(i: int):
        t_i = float(rule.nodes[i])
        alpha = node_norm_bound(t_i)
        inst = build_relaxation(
            node_objective(sc, target, t_i, z_scale=alpha),
            stats,
            basis,
            norm_bounds=[(zsym(k), 1.0) for k in range(sc.n_z)],
            minimize=True,
        )
        sol = solve(inst, tol=tol, max_iter=max_iter)
        if verbose:
            print(
                f"node {i + 1}/{m - 1}: t={t_i:.6f} s={sol.dual:.8f} "
                f"[{sol.status}] gap={sol.gap:.2e} {sol.wall_time:.2f}s"
            )
        return sol

    n_nodes = m - 1
    if workers and workers > 1 and n_nodes > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sols = list(pool.map(run_node, range(n_nodes)))
    else:
        sols = [run_node(i) for i in range(n_nodes)]

    records = []
    for i, sol in enumerate(sols):
        records.append(
            NodeRecord(
                t=float(rule.nodes[i]),
                weight=float(rule.weights[i]),
                s_value=sol.dual,
                status=sol.status,
                gap=sol.gap,
                wall_time=sol.wall_time,
            )
        )
    wall = time.perf_counter() - t_start
    bad = [r for r in records if r.status not in ("optimal", "near-optimal")]
    if any(r.status == "infeasible" for r in bad):
        raise ScenarioInfeasibleError(
            "node relaxation infeasible; the constraints admit no quantum model"
        )
    result = RateResult(bound=float("nan"), c_m=c_m, nodes=tuple(records), wall_time=wall)
    if bad:
        raise NodeSolveError(
            f"{len(bad)} node solve(s) failed: " + ", ".join(r.status for r in bad),
            replace(result, bound=result.recombined()),
        )
    return replace(result, bound=result.recombined())


def devetak_winter_rate(
    scenario: Scenario,
    target: EntropyTarget,
    stats: list[StatConstraint],
    key_distribution: Distribution,
    m: int,
    level: int = 2,
    extras=(),
    *,
    tol: float = 1e-8,
    max_iter: int = 300,
    workers: int | None = None,
    full: bool = False,
):
    """Asymptotic one-way key rate: certified H(A|E) minus observed H(A|B).

    ``key_distribution`` is the key-round behaviour; its inputs
    (target.x_star, target.y_star) select the generation round, and the
    same flip probability enters both terms.  With ``full`` the entropy
    record and the error-correction term are returned alongside.
    """
    if target.kind != "local":
        raise ValueError("the key rate is defined for the local single-input target")
    y_star = target.y_star if target.y_star is not None else 0
    result = entropy_bound(
        scenario, target, stats, m, level, extras,
        tol=tol, max_iter=max_iter, workers=workers,
    )
    h_ab = conditional_entropy(key_distribution, (target.x_star, y_star), flip=target.flip)
    rate = result.bound - h_ab
    if full:
        return rate, result, h_ab
    return rate


def optimal_preprocessing(rate_of_flip, lo: float = 0.0, hi: float = 0.45, xatol: float = 1e-3):
    """Golden-section maximization of ``rate_of_flip(q)`` over [lo, hi].

    The rate is unimodal in the flip probability in every regime we
    target; boundary maxima (q = 0) are found as accurately as interior
    ones.  Returns (best q, best rate).
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = rate_of_flip(c), rate_of_flip(d)
    while b - a > xatol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = rate_of_flip(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = rate_of_flip(d)
    q = 0.5 * (a + b)
    return q, rate_of_flip(q)
