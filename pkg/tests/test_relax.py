"""Structure of generated bases and assembled moment relaxations."""

import numpy as np
import pytest

from dientropy.ncpoly import (
    IDENTITY,
    Scenario,
    Word,
    adjoint,
    meas,
    word_class,
    zsym,
)
from dientropy.relax import (
    BasisTooSmallError,
    StatConstraint,
    build_relaxation,
    dump_instance,
    generate_basis,
    parse_instance,
    stat_constraint_polynomial,
)

CHSH_Z = Scenario(outcomes=((2, 2), (2, 2)), n_z=2)


def test_level1_chsh_basis():
    basis = generate_basis(CHSH_Z, 1)
    expected = {
        IDENTITY,
        Word((meas("A", 0, 0),)),
        Word((meas("A", 1, 0),)),
        Word((meas("B", 0, 0),)),
        Word((meas("B", 1, 0),)),
        Word((zsym(0),)),
        Word((zsym(0, True),)),
        Word((zsym(1),)),
        Word((zsym(1, True),)),
    }
    assert set(basis.words) == expected
    assert basis.size == 9
    assert basis.words[0] == IDENTITY


def test_level0_rejected():
    with pytest.raises(ValueError):
        generate_basis(CHSH_Z, 0)


def test_extras_ab_pattern():
    plain = generate_basis(CHSH_Z, 1)
    with_ab = generate_basis(CHSH_Z, 1, ["AB"])
    added = set(with_ab.words) - set(plain.words)
    assert added == {
        Word((meas("A", 0, 0), meas("B", 0, 0))),
        Word((meas("A", 0, 0), meas("B", 1, 0))),
        Word((meas("A", 1, 0), meas("B", 0, 0))),
        Word((meas("A", 1, 0), meas("B", 1, 0))),
    }


def test_unknown_pattern_letter():
    with pytest.raises(ValueError):
        generate_basis(CHSH_Z, 1, ["AQ"])
    with pytest.raises(ValueError):
        generate_basis(CHSH_Z, 1, ["ABC"])  # no party C here


def test_level2_contains_level1():
    b1 = generate_basis(CHSH_Z, 1)
    b2 = generate_basis(CHSH_Z, 2)
    assert set(b1.words) <= set(b2.words)
    assert all(len(w) <= 2 for w in b2.words)
    # every length-2 canonical product of declared symbols is present
    syms = CHSH_Z.all_symbols()
    from dientropy.ncpoly import _reduce

    for s in syms:
        for t in syms:
            prod = _reduce((s, t))
            if not prod.is_zero:
                assert prod in set(b2.words)


def chsh_game_constraint(bound, relation=">="):
    """Score of the CHSH game with uniform inputs: win iff a xor b = x and y."""
    terms = []
    for x in range(2):
        for y in range(2):
            for a in range(2):
                b = a ^ (x & y)
                terms.append(((("A", x, a), ("B", y, b)), 0.25))
    return StatConstraint("bell", tuple(terms), bound, relation, label="chsh")


def test_chsh_polynomial_coefficients():
    # hand expansion: [3 - 2 A0|0 - 2 B0|0 + 2(A0B0 + A0B1 + A1B0 - A1B1)]/4
    poly = stat_constraint_polynomial(chsh_game_constraint(0.8), CHSH_Z)
    assert poly.is_hermitian()
    A = [Word((meas("A", x, 0),)) for x in range(2)]
    B = [Word((meas("B", y, 0),)) for y in range(2)]
    AB = [[Word((meas("A", x, 0), meas("B", y, 0))) for y in range(2)] for x in range(2)]
    assert poly.coefficient(IDENTITY) == pytest.approx(0.75)
    assert poly.coefficient(A[0]) == pytest.approx(-0.5)
    assert poly.coefficient(B[0]) == pytest.approx(-0.5)
    assert poly.coefficient(A[1]) == 0
    assert poly.coefficient(B[1]) == 0
    for x in range(2):
        for y in range(2):
            want = -0.5 if x == y == 1 else 0.5
            assert poly.coefficient(AB[x][y]) == pytest.approx(want)


def test_instance_shape_and_symmetry():
    basis = generate_basis(CHSH_Z, 1, ["AB"])
    objective = CHSH_Z.word(zsym(0)) + CHSH_Z.word(zsym(0, True))
    inst = build_relaxation(objective, [chsh_game_constraint(0.8)], basis)
    moment = inst.blocks[0]
    assert moment.size == basis.size
    assert inst.var_words[0] == IDENTITY
    assert inst.equalities[0].label == "normalization"
    assert inst.equalities[0].indices == (0,) and inst.equalities[0].rhs == 1.0
    assert len(inst.inequalities) == 1
    # template is exactly symmetric for arbitrary variable assignments
    rng = np.random.default_rng(3)
    y = rng.standard_normal(inst.n_vars)
    mat = moment.evaluate(y)
    assert np.array_equal(mat, mat.T)
    # entry (v, w) references the class of adjoint(v) w
    idx = inst.var_index
    words = basis.words
    for r, c, v in zip(moment.rows, moment.cols, moment.vars):
        from dientropy.ncpoly import _reduce

        prod = _reduce(adjoint(words[r]).symbols + words[c].symbols)
        assert idx[word_class(prod)] == v


def test_constant_rhs_folding():
    # constraint p(1,1|0,0) = 0.2 expands through eliminated outcomes into
    # 1 - A - B + AB = 0.2, so the stored row is -A - B + AB >= / == -0.8
    basis = generate_basis(CHSH_Z.with_z(0), 1, ["AB"])
    c = StatConstraint("prob", (((("A", 0, 1), ("B", 0, 1)), 1.0),), 0.2, "==", label="p11")
    inst = build_relaxation(basis.scenario.projector("A", 0, 0), [c], basis)
    row = next(r for r in inst.equalities if r.label == "p11")
    assert row.rhs == pytest.approx(0.2 - 1.0)
    assert len(row.indices) == 3


def test_basis_too_small_error_names_word():
    basis = generate_basis(CHSH_Z, 1)  # no AB products available
    objective = CHSH_Z.word(meas("A", 0, 0), meas("B", 0, 0), zsym(0))
    with pytest.raises(BasisTooSmallError, match="A0|0 B0|0 Z0"):
        build_relaxation(objective, [], basis)


def test_localizing_blocks_built():
    scenario = Scenario(outcomes=((2, 2),), n_z=1)
    basis = generate_basis(scenario, 2)
    objective = scenario.word(zsym(0)) + scenario.word(zsym(0, True))
    alpha = 1.5
    inst = build_relaxation(objective, [], basis, norm_bounds=[(zsym(0), alpha)])
    assert len(inst.blocks) == 3
    sub_size = sum(1 for w in basis.words if len(w) <= 1)
    for blk in inst.blocks[1:]:
        assert blk.size == sub_size
        y = np.zeros(inst.n_vars)
        y[0] = 1.0  # normalized, all other moments zero
        mat = blk.evaluate(y)
        assert np.array_equal(mat, mat.T)
        # with all moments zero the block is alpha^2 on the diagonal where
        # the entry reduces to alpha^2 L(v* v) ... at least the (0,0) corner
        assert mat[0, 0] == pytest.approx(alpha * alpha)


def test_dump_parse_round_trip():
    basis = generate_basis(CHSH_Z, 1, ["AB"])
    objective = CHSH_Z.word(zsym(1)) + CHSH_Z.word(zsym(1, True))
    inst = build_relaxation(objective, [chsh_game_constraint(0.8)], basis)
    text = dump_instance(inst)
    back = parse_instance(text)
    assert back.n_vars == inst.n_vars
    assert back.minimize == inst.minimize
    assert len(back.blocks) == len(inst.blocks)
    y = np.random.default_rng(0).standard_normal(inst.n_vars)
    for b1, b2 in zip(inst.blocks, back.blocks):
        np.testing.assert_allclose(b1.evaluate(y), b2.evaluate(y), atol=1e-14)
    assert back.objective.indices == inst.objective.indices
    np.testing.assert_allclose(back.objective.coeffs, inst.objective.coeffs)
    for r1, r2 in zip(
        inst.equalities + inst.inequalities, back.equalities + back.inequalities
    ):
        assert r1.indices == r2.indices
        np.testing.assert_allclose(r1.coeffs, r2.coeffs)
        assert r1.rhs == pytest.approx(r2.rhs, abs=1e-15)


def test_with_objective_and_with_rhs_share_blocks():
    basis = generate_basis(CHSH_Z, 1, ["AB"])
    objective = CHSH_Z.word(zsym(0)) + CHSH_Z.word(zsym(0, True))
    inst = build_relaxation(objective, [chsh_game_constraint(0.8)], basis)
    swapped = inst.with_rhs({"chsh": 0.75})
    assert swapped.blocks is inst.blocks or swapped.blocks == inst.blocks
    assert next(r for r in swapped.inequalities if r.label == "chsh").rhs == 0.75
    other = inst.with_objective(inst.objective)
    assert other.blocks == inst.blocks
