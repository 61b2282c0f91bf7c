"""Moment relaxations of noncommutative polynomial minimization problems.

A level-k relaxation introduces one real variable per word class (a word
and its adjoint share a class) and one positive-semidefinite moment
block M(v, w) = L(v* w) over a monomial basis, together with the
normalization L(1) = 1, scalar statistical rows, and optionally
localizing blocks encoding operator-norm bounds on the Z symbols.  The
result is an SdpInstance consumed by the interior-point solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from dientropy.ncpoly import (
    IDENTITY,
    NCPolynomial,
    Scenario,
    Symbol,
    Word,
    _reduce,
    adjoint,
    word_class,
    zsym,
)

__all__ = [
    "MonomialBasis",
    "StatConstraint",
    "LinearRow",
    "BlockTemplate",
    "SdpInstance",
    "generate_basis",
    "build_relaxation",
    "stat_constraint_polynomial",
    "dump_instance",
    "parse_instance",
]


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered generating list of canonical words (identity first)."""

    scenario: Scenario
    words: tuple[Word, ...]
    level: int
    extras: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class StatConstraint:
    """Affine statistical requirement sum_terms c * p(outcomes | inputs) rel bound.

    Each term is a tuple of (party, input, outcome) triples, one per
    participating party (marginal terms list fewer parties; the empty
    term is a constant).  Outcome indices may name the last outcome; the
    eliminated projector is expanded during row construction.
    """

    kind: str  # "bell" or "prob"
    terms: tuple[tuple[tuple[tuple[str, int, int], ...], float], ...]
    bound: float
    relation: str = ">="  # ">=" or "=="
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("bell", "prob"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.relation not in (">=", "=="):
            raise ValueError(f"unknown relation {self.relation!r}")


@dataclass(frozen=True)
class LinearRow:
    """Sparse row over moment variables with right-hand side."""

    indices: tuple[int, ...]
    coeffs: tuple[float, ...]
    rhs: float = 0.0
    label: str = ""

    def dot(self, y: np.ndarray) -> float:
        return float(np.dot(y[list(self.indices)], self.coeffs)) if self.indices else 0.0


@dataclass
class BlockTemplate:
    """Symmetric matrix affine in the variables: const + sum_j y_j * B_j.

    Entry arrays cover both triangles explicitly.
    """

    size: int
    rows: np.ndarray
    cols: np.ndarray
    vars: np.ndarray
    coeffs: np.ndarray
    const_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    const_cols: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    const_vals: np.ndarray = field(default_factory=lambda: np.empty(0))
    label: str = ""

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        np.add.at(out, (self.rows, self.cols), self.coeffs * y[self.vars])
        np.add.at(out, (self.const_rows, self.const_cols), self.const_vals)
        return out


@dataclass
class SdpInstance:
    """Block-diagonal SDP over moment variables.

    minimize (or maximize) objective . y  subject to
      block_k(y) >= 0 (PSD),  equality rows  A y = b,
      inequality rows  G y >= h.
    """

    n_vars: int
    blocks: list[BlockTemplate]
    equalities: list[LinearRow]
    inequalities: list[LinearRow]
    objective: LinearRow
    minimize: bool = True
    obj_const: float = 0.0
    var_words: tuple[Word, ...] = ()

    @property
    def var_index(self) -> dict[Word, int]:
        return {w: i for i, w in enumerate(self.var_words)}

    def with_objective(self, objective: LinearRow, obj_const: float = 0.0) -> "SdpInstance":
        return replace(self, objective=objective, obj_const=obj_const)

    def with_rhs(self, new_rhs: dict[str, float]) -> "SdpInstance":
        """Copy with right-hand sides replaced by constraint label."""
        eqs = [replace(r, rhs=new_rhs.get(r.label, r.rhs)) for r in self.equalities]
        ineqs = [replace(r, rhs=new_rhs.get(r.label, r.rhs)) for r in self.inequalities]
        return replace(self, equalities=eqs, inequalities=ineqs)


def generate_basis(
    scenario: Scenario, level: int, extras: list[str] | tuple[str, ...] = ()
) -> MonomialBasis:
    """All canonical words of length <= level, plus pattern products.

    A pattern like "ABZ" contributes every canonical product of one
    symbol per letter; the letter Z ranges over both Z_a and Z_a*.
    """
    if level < 1:
        raise ValueError(f"relaxation level must be >= 1, got {level}")
    per_letter = {
        "A": [s for s in scenario.measurement_symbols() if s.party == "A"],
        "B": [s for s in scenario.measurement_symbols() if s.party == "B"],
        "C": [s for s in scenario.measurement_symbols() if s.party == "C"],
        "Z": scenario.z_symbols(),
    }
    symbols = scenario.all_symbols()

    seen: set[Word] = {IDENTITY}
    frontier = [IDENTITY]
    for _ in range(level):
        nxt = []
        for w in frontier:
            for s in symbols:
                prod = _reduce(w.symbols + (s,))
                if not prod.is_zero and prod not in seen:
                    seen.add(prod)
                    nxt.append(prod)
        frontier = nxt

    for pattern in extras:
        pools: list[list[Symbol]] = []
        for letter in pattern:
            if letter not in per_letter:
                raise ValueError(f"unknown pattern letter {letter!r} in {pattern!r}")
            if not per_letter[letter]:
                raise ValueError(f"pattern {pattern!r} uses a party absent from the scenario")
            pools.append(per_letter[letter])
        stack = [()]
        for pool in pools:
            stack = [combo + (s,) for combo in stack for s in pool]
        for combo in stack:
            prod = _reduce(combo)
            if not prod.is_zero:
                seen.add(prod)

    words = sorted(seen - {IDENTITY}, key=lambda w: w.key)
    return MonomialBasis(scenario, (IDENTITY, *words), level, tuple(extras))


def stat_constraint_polynomial(c: StatConstraint, scenario: Scenario) -> NCPolynomial:
    """Expand a statistical constraint into the projector polynomial of its lhs."""
    total = scenario.zero()
    for term, coeff in c.terms:
        part = scenario.one()
        for party, inp, outcome in term:
            part = part * scenario.projector(party, inp, outcome)
        total = total + coeff * part
    return total


class BasisTooSmallError(ValueError):
    pass


def _polynomial_row(
    poly: NCPolynomial,
    var_index: dict[Word, int],
    context: str,
) -> tuple[tuple[int, ...], tuple[float, ...], float]:
    """Collapse a Hermitian polynomial onto word-class variables.

    Returns (indices, coefficients, constant) where the constant is the
    identity-word coefficient; callers fold it into the rhs or keep it.
    """
    acc: dict[int, complex] = {}
    const = 0.0
    for w, c in poly.items():
        if w == IDENTITY:
            const += c.real
            if abs(c.imag) > 1e-9:
                raise ValueError(f"non-real identity coefficient in {context}")
            continue
        cls = word_class(w)
        idx = var_index.get(cls)
        if idx is None:
            raise BasisTooSmallError(
                f"basis too small: word '{w}' of the {context} has no moment class"
            )
        acc[idx] = acc.get(idx, 0j) + c
    indices = []
    coeffs = []
    for idx in sorted(acc):
        val = acc[idx]
        if abs(val.imag) > 1e-9 * max(1.0, abs(val)):
            raise ValueError(f"{context} is not Hermitian: residual {val.imag} on class {idx}")
        if val.real != 0.0:
            indices.append(idx)
            coeffs.append(float(val.real))
    return tuple(indices), tuple(coeffs), const


def build_relaxation(
    objective: NCPolynomial,
    stats: list[StatConstraint],
    basis: MonomialBasis,
    norm_bounds: list[tuple[Symbol, float]] | None = None,
    minimize: bool = True,
) -> SdpInstance:
    """Assemble the moment relaxation as a block-diagonal SDP.

    The instance holds one moment block over the basis, the L(1) = 1
    normalization, one scalar row per statistical constraint, and, when
    norm_bounds lists (Z symbol, alpha) pairs, localizing blocks for
    alpha^2 - Z*Z and alpha^2 - ZZ* over the level-(k-1) sub-basis.
    """
    scenario = basis.scenario
    if objective.scenario != scenario:
        raise ValueError("objective declared over a different algebra")

    words = basis.words
    d = len(words)
    adjoints = [adjoint(w) for w in words]

    var_index: dict[Word, int] = {}
    ent_r: list[int] = []
    ent_c: list[int] = []
    ent_v: list[int] = []
    ent_a: list[float] = []
    for i in range(d):
        left = adjoints[i].symbols
        for j in range(i, d):
            prod = _reduce(left + words[j].symbols)
            if prod.is_zero:
                continue
            cls = word_class(prod)
            idx = var_index.setdefault(cls, len(var_index))
            ent_r.append(i)
            ent_c.append(j)
            ent_v.append(idx)
            ent_a.append(1.0)
            if i != j:
                ent_r.append(j)
                ent_c.append(i)
                ent_v.append(idx)
                ent_a.append(1.0)
    blocks = [
        BlockTemplate(
            size=d,
            rows=np.array(ent_r, dtype=np.int64),
            cols=np.array(ent_c, dtype=np.int64),
            vars=np.array(ent_v, dtype=np.int64),
            coeffs=np.array(ent_a),
            label="moment",
        )
    ]

    if var_index.get(IDENTITY) != 0:
        raise AssertionError("identity class must be variable 0")
    equalities = [LinearRow((0,), (1.0,), 1.0, label="normalization")]
    inequalities: list[LinearRow] = []

    for k, c in enumerate(stats):
        poly = stat_constraint_polynomial(c, scenario)
        label = c.label or f"stat{k}"
        indices, coeffs, const = _polynomial_row(poly, var_index, f"constraint '{label}'")
        row = LinearRow(indices, coeffs, c.bound - const, label=label)
        if c.relation == "==":
            equalities.append(row)
        else:
            inequalities.append(row)

    if norm_bounds:
        sub = [w for w in words if len(w) <= basis.level - 1]
        if not sub:
            sub = [IDENTITY]
        for z, alpha in norm_bounds:
            if z.party != "Z":
                raise ValueError(f"norm bound on non-Z symbol {z}")
            zstar = zsym(z.outcome, not z.star)
            for q_label, q_poly in (
                (f"loc:a2-Z{z.outcome}*Z{z.outcome}", _norm_poly(scenario, z, zstar, alpha)),
                (f"loc:a2-Z{z.outcome}Z{z.outcome}*", _norm_poly(scenario, zstar, z, alpha)),
            ):
                blocks.append(
                    _localizing_block(q_poly, sub, scenario, var_index, q_label)
                )

    obj_idx, obj_co, obj_const = _polynomial_row(objective, var_index, "objective")
    n = len(var_index)
    var_words = [None] * n
    for w, i in var_index.items():
        var_words[i] = w
    return SdpInstance(
        n_vars=n,
        blocks=blocks,
        equalities=equalities,
        inequalities=inequalities,
        objective=LinearRow(obj_idx, obj_co, label="objective"),
        minimize=minimize,
        obj_const=obj_const,
        var_words=tuple(var_words),
    )


def _norm_poly(scenario: Scenario, left: Symbol, right: Symbol, alpha: float) -> NCPolynomial:
    # alpha^2 * 1 - left*right (with left the adjoint factor written first)
    return (alpha * alpha) * scenario.one() - scenario.word(left, right)


def _localizing_block(
    q_poly: NCPolynomial,
    sub: list[Word],
    scenario: Scenario,
    var_index: dict[Word, int],
    label: str,
) -> BlockTemplate:
    ds = len(sub)
    rows, cols, vars_, coeffs = [], [], [], []
    for i in range(ds):
        left = scenario.word(*adjoint(sub[i]).symbols)
        for j in range(i, ds):
            right = scenario.word(*sub[j].symbols)
            entry = left * q_poly * right
            indices, co, const = _polynomial_row(entry, var_index, f"localizing block {label}")
            if const:
                # identity-class contribution is variable 0 (kept affine in y)
                indices = (0, *indices)
                co = (const, *co)
            for idx, a in zip(indices, co):
                rows.append(i)
                cols.append(j)
                vars_.append(idx)
                coeffs.append(a)
                if i != j:
                    rows.append(j)
                    cols.append(i)
                    vars_.append(idx)
                    coeffs.append(a)
    return BlockTemplate(
        size=ds,
        rows=np.array(rows, dtype=np.int64),
        cols=np.array(cols, dtype=np.int64),
        vars=np.array(vars_, dtype=np.int64),
        coeffs=np.array(coeffs),
        label=label,
    )


# -- plain text dump ---------------------------------------------------------
#
# Header lines, then one CSV line per affine block entry:
#   sdp 1
#   vars <n> minimize|maximize
#   objconst <c>
#   obj,<var>,<coeff>
#   blocksizes <s1> <s2> ...
#   <block>,<row>,<col>,<var>,<coeff>      (var = -1 for constant entries)
#   eq,<rhs>,<var>:<coeff>,...
#   ineq,<rhs>,<var>:<coeff>,...


def dump_instance(inst: SdpInstance) -> str:
    lines = ["sdp 1"]
    lines.append(f"vars {inst.n_vars} {'minimize' if inst.minimize else 'maximize'}")
    if inst.obj_const:
        lines.append(f"objconst {inst.obj_const!r}")
    for idx, co in zip(inst.objective.indices, inst.objective.coeffs):
        lines.append(f"obj,{int(idx)},{float(co)!r}")
    lines.append("blocksizes " + " ".join(str(b.size) for b in inst.blocks))
    for bi, b in enumerate(inst.blocks):
        for r, c, v, a in zip(b.rows, b.cols, b.vars, b.coeffs):
            lines.append(f"{bi},{int(r)},{int(c)},{int(v)},{float(a)!r}")
        for r, c, a in zip(b.const_rows, b.const_cols, b.const_vals):
            lines.append(f"{bi},{int(r)},{int(c)},-1,{float(a)!r}")
    for kind, rows in (("eq", inst.equalities), ("ineq", inst.inequalities)):
        for row in rows:
            body = ",".join(f"{int(i)}:{float(a)!r}" for i, a in zip(row.indices, row.coeffs))
            lines.append(f"{kind},{float(row.rhs)!r}" + ("," + body if body else ""))
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> SdpInstance:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != "sdp 1":
        raise ValueError("not a v1 sdp dump")
    head = lines[1].split()
    if head[0] != "vars":
        raise ValueError("missing vars header")
    n = int(head[1])
    minimize = head[2] == "minimize"
    obj: dict[int, float] = {}
    obj_const = 0.0
    sizes: list[int] = []
    raw_entries: list[tuple[int, int, int, int, float]] = []
    eqs: list[LinearRow] = []
    ineqs: list[LinearRow] = []
    for ln in lines[2:]:
        if ln.startswith("objconst "):
            obj_const = float(ln.split()[1])
        elif ln.startswith("obj,"):
            _, idx, co = ln.split(",")
            obj[int(idx)] = obj.get(int(idx), 0.0) + float(co)
        elif ln.startswith("blocksizes"):
            sizes = [int(s) for s in ln.split()[1:]]
        elif ln.startswith("eq,") or ln.startswith("ineq,"):
            parts = ln.split(",")
            rhs = float(parts[1])
            idx, co = [], []
            for item in parts[2:]:
                i, a = item.split(":")
                idx.append(int(i))
                co.append(float(a))
            row = LinearRow(tuple(idx), tuple(co), rhs)
            (eqs if parts[0] == "eq" else ineqs).append(row)
        else:
            b, r, c, v, a = ln.split(",")
            raw_entries.append((int(b), int(r), int(c), int(v), float(a)))
    blocks = []
    for bi, size in enumerate(sizes):
        mine = [(r, c, v, a) for b, r, c, v, a in raw_entries if b == bi]
        var_part = [(r, c, v, a) for r, c, v, a in mine if v >= 0]
        const_part = [(r, c, a) for r, c, v, a in mine if v < 0]
        blocks.append(
            BlockTemplate(
                size=size,
                rows=np.array([e[0] for e in var_part], dtype=np.int64),
                cols=np.array([e[1] for e in var_part], dtype=np.int64),
                vars=np.array([e[2] for e in var_part], dtype=np.int64),
                coeffs=np.array([e[3] for e in var_part]),
                const_rows=np.array([e[0] for e in const_part], dtype=np.int64),
                const_cols=np.array([e[1] for e in const_part], dtype=np.int64),
                const_vals=np.array([e[2] for e in const_part]),
            )
        )
    items = sorted(obj.items())
    return SdpInstance(
        n_vars=n,
        blocks=blocks,
        equalities=eqs,
        inequalities=ineqs,
        objective=LinearRow(tuple(i for i, _ in items), tuple(a for _, a in items)),
        minimize=minimize,
        obj_const=obj_const,
    )
