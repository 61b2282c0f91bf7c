"""Device models: behaviours, detection efficiency, Bell values, entropies."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dientropy.devices import (
    BellExpression,
    Distribution,
    QubitStrategy,
    analytic_chsh_rate,
    apply_detection_efficiency,
    asymmetric_chsh,
    asymmetric_chsh_optimal_strategy,
    bell_value,
    chsh,
    chsh_game_score,
    chsh_optimal_strategy,
    conditional_entropy,
    holz,
    holz_optimal_strategy,
    joint_entropy_exact,
    key_entropy_exact,
    mark_no_click,
    moment_vector,
    optimize_strategy,
    strategy_distribution,
)
from dientropy.ncpoly import Scenario, meas

TSIRELSON = (2.0 + math.sqrt(2.0)) / 4.0


def random_strategy(rng, n_parties=2, n_inputs=2):
    angles = tuple(
        tuple(rng.uniform(0.0, math.pi, size=n_inputs)) for _ in range(n_parties)
    )
    return QubitStrategy(state_angle=rng.uniform(0.0, math.pi / 2), angles=angles)


def deterministic_distribution(outputs):
    """Three-party behaviour where party p answers outputs[p][x] on input x."""
    table = {}
    for ins in itertools.product(range(2), repeat=len(outputs)):
        arr = np.zeros((2,) * len(outputs))
        arr[tuple(outputs[p][ins[p]] for p in range(len(outputs)))] = 1.0
        table[ins] = arr
    return Distribution(table)


def max_table_dev(d1, d2):
    return max(np.max(np.abs(d1.table[k] - d2.table[k])) for k in d1.table)


def test_tsirelson_score():
    d = strategy_distribution(chsh_optimal_strategy())
    assert abs(chsh_game_score(d) - TSIRELSON) <= 1e-12


def test_product_state_factorizes():
    s = QubitStrategy(state_angle=0.0, angles=((0.3, 1.1), (0.7, 2.0)))
    d = strategy_distribution(s)
    for ins in d.table:
        pa = d.marginal(0, ins[0])
        pb = d.marginal(1, ins[1])
        assert np.max(np.abs(d.table[ins] - np.outer(pa, pb))) <= 1e-12


def test_ghz_reaches_holz_maximum():
    d = strategy_distribution(holz_optimal_strategy())
    assert abs(bell_value(d, holz()) - 1.5) <= 1e-9


def test_rejects_invalid_states():
    good = np.eye(4) / 4.0
    QubitStrategy(0.0, ((0.0,), (0.0,)), state=good).density_matrix()
    with pytest.raises(ValueError, match="positive"):
        bad = np.diag([0.6, 0.5, 0.0, -0.1])
        QubitStrategy(0.0, ((0.0,), (0.0,)), state=bad).density_matrix()
    with pytest.raises(ValueError, match="trace"):
        QubitStrategy(0.0, ((0.0,), (0.0,)), state=np.eye(4)).density_matrix()
    with pytest.raises(ValueError, match="mixed"):
        QubitStrategy(0.0, ((0.0,), (0.0,)), state=good).state_vector()


def test_distribution_validation():
    with pytest.raises(ValueError, match="sum"):
        Distribution({(0, 0): np.array([[0.5, 0.2], [0.1, 0.1]])})
    with pytest.raises(ValueError, match="negative"):
        Distribution({(0, 0): np.array([[1.2, -0.2], [0.0, 0.0]])})
    # Signaling: Alice's marginal flips with Bob's input.
    with pytest.raises(ValueError, match="signaling"):
        Distribution(
            {
                (0, 0): np.array([[1.0, 0.0], [0.0, 0.0]]),
                (0, 1): np.array([[0.0, 0.0], [1.0, 0.0]]),
            }
        )


def test_detection_identity_and_total_failure():
    d = strategy_distribution(chsh_optimal_strategy())
    assert max_table_dev(apply_detection_efficiency(d, 1.0), d) == 0.0
    d0 = apply_detection_efficiency(d, 0.0)
    for arr in d0.table.values():
        assert arr[0, 0] == 1.0
    with pytest.raises(ValueError, match="efficiency"):
        apply_detection_efficiency(d, 1.2)
    with pytest.raises(ValueError, match="efficiency"):
        apply_detection_efficiency(d, -0.1)


def test_detection_matches_independent_evaluation():
    eta = 0.9
    d = strategy_distribution(chsh_optimal_strategy())
    de = apply_detection_efficiency(d, eta)
    for ins, q in d.table.items():
        for a, b in itertools.product(range(2), repeat=2):
            expect = eta * eta * q[a, b]
            if b == 0:
                expect += eta * (1 - eta) * q[a, :].sum()
            if a == 0:
                expect += eta * (1 - eta) * q[:, b].sum()
            if a == 0 and b == 0:
                expect += (1 - eta) ** 2
            assert abs(de.table[ins][a, b] - expect) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    eta=st.floats(0.0, 1.0),
    lam=st.floats(0.0, 1.0),
)
def test_detection_model_is_affine(seed, eta, lam):
    rng = np.random.default_rng(seed)
    d1 = strategy_distribution(random_strategy(rng))
    d2 = strategy_distribution(random_strategy(rng))
    mixed = Distribution(
        {k: lam * d1.table[k] + (1 - lam) * d2.table[k] for k in d1.table}
    )
    lhs = apply_detection_efficiency(mixed, eta)
    e1 = apply_detection_efficiency(d1, eta)
    e2 = apply_detection_efficiency(d2, eta)
    rhs = {k: lam * e1.table[k] + (1 - lam) * e2.table[k] for k in e1.table}
    assert max(np.max(np.abs(lhs.table[k] - rhs[k])) for k in rhs) <= 1e-12


def test_no_click_marking():
    d = strategy_distribution(chsh_optimal_strategy())
    de = apply_detection_efficiency(d, 0.8)
    dm = mark_no_click(de, party=1, x=1)
    assert dm.outcome_counts((0, 1)) == (2, 3)
    assert abs(dm.marginal(1, 1)[-1] - 0.2) <= 1e-12
    # Folding the explicit no-click slot back into outcome 0 recovers the
    # plain detection model exactly.
    for x in range(2):
        arr = dm.table[(x, 1)]
        folded = arr[:, :2].copy()
        folded[:, 0] += arr[:, 2]
        assert np.max(np.abs(folded - de.table[(x, 1)])) == 0.0
    for k in dm.table:
        if k[1] != 1:
            assert np.max(np.abs(dm.table[k] - de.table[k])) == 0.0
    with pytest.raises(ValueError, match="already"):
        mark_no_click(dm, party=1, x=1)
    with pytest.raises(ValueError, match="detection"):
        mark_no_click(d, party=1, x=1)


def test_chsh_score_of_classical_strategy():
    zeros = deterministic_distribution(((0, 0), (0, 0)))
    assert bell_value(zeros, chsh()) == 2.0
    assert chsh_game_score(zeros) == 0.75


def test_asymmetric_chsh_alpha_one_is_chsh():
    assert chsh().coefficients() == asymmetric_chsh(1.0).coefficients()
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = strategy_distribution(random_strategy(rng))
        assert abs(bell_value(d, chsh()) - bell_value(d, asymmetric_chsh(1.0))) <= 1e-12


@pytest.mark.parametrize("alpha", [0.5, 0.9, 1.0, 1.4, 2.0])
def test_asymmetric_chsh_quantum_maximum(alpha):
    d = strategy_distribution(asymmetric_chsh_optimal_strategy(alpha))
    assert abs(bell_value(d, asymmetric_chsh(alpha)) - 2.0 * math.hypot(1.0, alpha)) <= 1e-6


def test_holz_local_bound_by_enumeration():
    # Every vertex of the three-party local polytope is one deterministic
    # answer table; convexity extends the bound to all local behaviours.
    best = -math.inf
    expr = holz()
    for bits in itertools.product(range(2), repeat=6):
        outputs = (bits[0:2], bits[2:4], bits[4:6])
        val = bell_value(deterministic_distribution(outputs), expr)
        assert val <= 1.0 + 1e-12
        best = max(best, val)
    assert abs(best - 1.0) <= 1e-12


def test_game_score_matches_winning_event_sum():
    rng = np.random.default_rng(11)
    for _ in range(100):
        d = strategy_distribution(random_strategy(rng))
        direct = 0.0
        for x, y in itertools.product(range(2), repeat=2):
            for a, b in itertools.product(range(2), repeat=2):
                if a ^ b == x & y:
                    direct += 0.25 * d.prob((a, b), (x, y))
        assert abs(chsh_game_score(d) - direct) <= 1e-12


def test_conditional_entropy_values():
    perfect = Distribution({(0, 0): np.array([[0.5, 0.0], [0.0, 0.5]])})
    assert conditional_entropy(perfect, (0, 0)) == 0.0
    uniform = Distribution({(0, 0): np.full((2, 2), 0.25)})
    assert abs(conditional_entropy(uniform, (0, 0)) - 1.0) <= 1e-12
    # Flipping the key bit of a perfectly correlated pair is a binary
    # symmetric channel, so the cost is the binary entropy of the flip.
    h01 = -(0.1 * math.log2(0.1) + 0.9 * math.log2(0.9))
    assert abs(conditional_entropy(perfect, (0, 0), flip=0.1) - h01) <= 1e-12
    assert abs(h01 - 0.4690) <= 1e-4
    with pytest.raises(ValueError, match="flip"):
        conditional_entropy(perfect, (0, 0), flip=0.7)


def test_conditional_entropy_with_no_click_column():
    d = strategy_distribution(chsh_optimal_strategy())
    dm = mark_no_click(apply_detection_efficiency(d, 0.8), party=1, x=0)
    h = conditional_entropy(dm, (0, 0))
    arr = dm.table[(0, 0)]
    manual = 0.0
    for b in range(3):
        pb = arr[:, b].sum()
        pa = arr[0, b] / pb
        if 0.0 < pa < 1.0:
            manual -= pb * (pa * math.log2(pa) + (1 - pa) * math.log2(1 - pa))
    assert abs(h - manual) <= 1e-12


def test_analytic_rate_endpoints():
    assert analytic_chsh_rate(0.75) == 0.0
    assert abs(analytic_chsh_rate(TSIRELSON) - 1.0) <= 1e-6
    assert abs(analytic_chsh_rate(0.80) - 0.3461124357945391) <= 1e-12
    for bad in (0.7, 0.86, -1.0):
        with pytest.raises(ValueError, match="outside"):
            analytic_chsh_rate(bad)


def test_moments_match_born_rule():
    sc = Scenario(outcomes=((2, 2), (2, 2)), n_z=1)
    poly_id = next(iter(Scenario(outcomes=((2, 2), (2, 2)), n_z=1).word().terms))
    w_a = next(iter(sc.word(meas("A", 0, 0)).terms))
    w_ab = next(iter(sc.word(meas("A", 1, 0), meas("B", 0, 0)).terms))
    s = chsh_optimal_strategy()
    d = strategy_distribution(s)
    vals = moment_vector(s, [poly_id, w_a, w_ab], z_values={0: 0.5})
    assert vals[0] == 1.0
    assert abs(vals[1] - d.marginal(0, 0)[0]) <= 1e-12
    assert abs(vals[2] - d.prob((0, 0), (1, 0))) <= 1e-12


def test_exact_entropies_for_pure_strategies():
    s = chsh_optimal_strategy()
    assert abs(key_entropy_exact(s, 0) - 1.0) <= 1e-12
    assert abs(key_entropy_exact(s, 0, flip=0.3) - 1.0) <= 1e-12
    # Maximally entangled pair, A measures Z, B at 45 degrees: the joint
    # outcome distribution is (cos^2, sin^2 of pi/8) split over parities.
    expect = 1.0 + (
        -(math.sin(math.pi / 8) ** 2) * math.log2(math.sin(math.pi / 8) ** 2)
        - (math.cos(math.pi / 8) ** 2) * math.log2(math.cos(math.pi / 8) ** 2)
    )
    assert abs(joint_entropy_exact(s, (0, 0)) - expect) <= 1e-12
    skew = QubitStrategy(state_angle=0.3, angles=((0.0, 1.0), (0.5, 2.0)))
    p0 = strategy_distribution(skew).marginal(0, 1)[0]
    got = key_entropy_exact(skew, 1)
    assert abs(got - (-(p0 * math.log2(p0) + (1 - p0) * math.log2(1 - p0)))) <= 1e-12


def test_optimizer_recovers_tsirelson():
    def score(s):
        return chsh_game_score(strategy_distribution(s))

    bent = QubitStrategy(
        state_angle=math.pi / 4 + 0.2,
        angles=((0.15, math.pi / 2 - 0.2), (math.pi / 4 + 0.1, -math.pi / 4 + 0.2)),
    )
    best, val = optimize_strategy(score, start=bent, maxiter=400)
    assert val >= TSIRELSON - 1e-5
    assert isinstance(best, QubitStrategy)


def test_bell_expression_coefficients_merge_duplicates():
    e = BellExpression("x", ((((0, 0), (1, 0)), 0.5), (((1, 0), (0, 0)), 0.5)))
    assert e.coefficients() == {((0, 0), (1, 0)): 1.0}
