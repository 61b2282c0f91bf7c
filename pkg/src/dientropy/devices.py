"""Explicit device models: qubit strategies, their statistics, and oracles.

Everything here is finite-dimensional and exact (up to float arithmetic),
which is what makes it useful as an independent check on the relaxation
machinery: a concrete strategy yields a concrete behaviour, concrete Bell
values, and a concrete conditional entropy, and any certified lower bound
must sit below the latter.

Measurements are rank-1 projective qubit measurements in the Z-X plane,
parameterized by one angle each: the observable is cos(t) Z + sin(t) X
and the two projectors are (I +/- observable) / 2.  States are shared
pure states cos(t)|0..0> + sin(t)|1..1> over two or three qubits, or an
explicitly supplied density matrix.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .ncpoly import Word

__all__ = [
    "QubitStrategy",
    "Distribution",
    "BellExpression",
    "strategy_distribution",
    "apply_detection_efficiency",
    "mark_no_click",
    "chsh",
    "asymmetric_chsh",
    "holz",
    "bell_value",
    "chsh_game_score",
    "conditional_entropy",
    "analytic_chsh_rate",
    "key_entropy_exact",
    "joint_entropy_exact",
    "moment_vector",
    "chsh_optimal_strategy",
    "asymmetric_chsh_optimal_strategy",
    "holz_optimal_strategy",
    "optimize_strategy",
]

_PARTY_INDEX = {"A": 0, "B": 1, "C": 2}

_I2 = np.eye(2)


def _observable(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [s, -c]])


def _projector(theta: float, outcome: int) -> np.ndarray:
    sign = 1.0 if outcome == 0 else -1.0
    return 0.5 * (_I2 + sign * _observable(theta))


def _binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def _shannon(probs) -> float:
    h = 0.0
    for p in probs:
        if p > 0.0:
            h -= p * math.log2(p)
    return h


@dataclass(frozen=True)
class QubitStrategy:
    """Shared entangled state plus one measurement angle per (party, input).

    ``angles[p][x]`` is party p's angle for input x; the number of inner
    tuples fixes the number of parties (2 or 3).  ``state_angle`` t selects
    cos(t)|0..0> + sin(t)|1..1>; passing ``state`` overrides it with an
    arbitrary density matrix of matching dimension.
    """

    state_angle: float
    angles: tuple[tuple[float, ...], ...]
    state: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if not 2 <= len(self.angles) <= 3:
            raise ValueError("two or three parties required")
        object.__setattr__(
            self, "angles", tuple(tuple(float(a) for a in row) for row in self.angles)
        )
        for row in self.angles:
            if not row:
                raise ValueError("every party needs at least one input")
            for a in row:
                if not math.isfinite(a):
                    raise ValueError("angles must be finite")

    @property
    def n_parties(self) -> int:
        return len(self.angles)

    @property
    def n_inputs(self) -> tuple[int, ...]:
        return tuple(len(row) for row in self.angles)

    @property
    def dim(self) -> int:
        return 2 ** self.n_parties

    def state_vector(self) -> np.ndarray:
        """The shared pure state, or an error if an explicit mixed state is set."""
        if self.state is not None:
            w, v = np.linalg.eigh(self.density_matrix())
            if w[-1] < 1.0 - 1e-10:
                raise ValueError("state is mixed; no single state vector exists")
            return v[:, -1]
        psi = np.zeros(self.dim)
        psi[0] = math.cos(self.state_angle)
        psi[-1] = math.sin(self.state_angle)
        return psi

    def density_matrix(self) -> np.ndarray:
        if self.state is None:
            psi = self.state_vector()
            return np.outer(psi, psi)
        rho = np.asarray(self.state, dtype=float)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"state must be {self.dim}x{self.dim}")
        if np.max(np.abs(rho - rho.T)) > 1e-10:
            raise ValueError("state must be symmetric")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
            raise ValueError("state must be positive semidefinite")
        if abs(np.trace(rho) - 1.0) > 1e-10:
            raise ValueError("state must have unit trace")
        return rho

    def projector(self, party: int, x: int, outcome: int) -> np.ndarray:
        """Local 2x2 projector of ``party`` for input x and a binary outcome."""
        if outcome not in (0, 1):
            raise ValueError("projective qubit measurements are binary")
        return _projector(self.angles[party][x], outcome)

    def full_projector(self, party: int, x: int, outcome: int) -> np.ndarray:
        """The same projector embedded in the joint Hilbert space."""
        ops = [_I2] * self.n_parties
        ops[party] = self.projector(party, x, outcome)
        out = ops[0]
        for op in ops[1:]:
            out = np.kron(out, op)
        return out


class Distribution:
    """A conditional outcome distribution p(outcomes | inputs).

    ``table[ins]`` is the joint outcome array for one input tuple, so the
    outcome alphabet may differ between inputs (that is how the explicit
    no-click outcome enters).  Construction validates normalization to
    1e-12 and no-signaling to 1e-10.
    """

    def __init__(self, table: dict[tuple[int, ...], np.ndarray], _detection=None):
        if not table:
            raise ValueError("empty distribution")
        self.table = {
            tuple(ins): np.array(arr, dtype=float) for ins, arr in table.items()
        }
        first = next(iter(self.table))
        self.n_parties = len(first)
        self.n_inputs = tuple(
            1 + max(ins[p] for ins in self.table) for p in range(self.n_parties)
        )
        self._detection = _detection
        self._check()

    def _check(self):
        expected = set(itertools.product(*(range(n) for n in self.n_inputs)))
        if set(self.table) != expected:
            raise ValueError("input tuples must form a full grid")
        for ins, arr in self.table.items():
            if arr.ndim != self.n_parties:
                raise ValueError(f"table entry for {ins} has wrong rank")
            if np.min(arr) < -1e-12:
                raise ValueError(f"negative probability at inputs {ins}")
            if abs(arr.sum() - 1.0) > 1e-12:
                raise ValueError(f"probabilities at inputs {ins} sum to {arr.sum()!r}")
        # No-signaling: each party's marginal may depend only on its own input.
        for p in range(self.n_parties):
            for xp in range(self.n_inputs[p]):
                ref = None
                for ins in sorted(self.table):
                    if ins[p] != xp:
                        continue
                    marg = self._marginal_at(p, ins)
                    if ref is None:
                        ref = marg
                    elif marg.shape != ref.shape or np.max(np.abs(marg - ref)) > 1e-10:
                        raise ValueError(
                            f"signaling marginal for party {p} input {xp}"
                        )

    def _marginal_at(self, party: int, ins: tuple[int, ...]) -> np.ndarray:
        axes = tuple(q for q in range(self.n_parties) if q != party)
        return self.table[ins].sum(axis=axes)

    def outcome_counts(self, ins: tuple[int, ...]) -> tuple[int, ...]:
        return self.table[tuple(ins)].shape

    def prob(self, outs, ins) -> float:
        return float(self.table[tuple(ins)][tuple(outs)])

    def marginal(self, party: int, x: int) -> np.ndarray:
        """One party's outcome distribution for one input (well defined by no-signaling)."""
        ins = tuple(x if p == party else 0 for p in range(self.n_parties))
        return self._marginal_at(party, ins)

    def correlator(self, involved: dict[int, int]) -> float:
        """<prod_p O_{p, x_p}> over ``involved`` = {party: input} with +/-1 outcomes."""
        ins = tuple(involved.get(p, 0) for p in range(self.n_parties))
        arr = self.table[ins]
        for p in involved:
            if arr.shape[p] != 2:
                raise ValueError("correlators need binary outcomes at the involved inputs")
        total = 0.0
        for outs in np.ndindex(arr.shape):
            sign = (-1) ** sum(outs[p] for p in involved)
            total += sign * arr[outs]
        return total


def strategy_distribution(strategy: QubitStrategy) -> Distribution:
    """Born-rule behaviour of an explicit strategy."""
    rho = strategy.density_matrix()
    # Cache per-party projector lists once; the loops below only kron them.
    local = [
        [
            [strategy.projector(p, x, a) for a in (0, 1)]
            for x in range(strategy.n_inputs[p])
        ]
        for p in range(strategy.n_parties)
    ]
    table = {}
    for ins in itertools.product(*(range(n) for n in strategy.n_inputs)):
        arr = np.empty((2,) * strategy.n_parties)
        for outs in np.ndindex(arr.shape):
            op = local[0][ins[0]][outs[0]]
            for p in range(1, strategy.n_parties):
                op = np.kron(op, local[p][ins[p]][outs[p]])
            arr[outs] = np.trace(rho @ op)
        np.clip(arr, 0.0, None, out=arr)
        arr /= arr.sum()
        table[ins] = arr
    return Distribution(table)


def apply_detection_efficiency(dist: Distribution, eta: float) -> Distribution:
    """Both detectors fire independently with probability eta; no-click becomes outcome 0.

    For binary ideal outcomes this is the standard two-party model: with q
    the ideal behaviour,

        p(a, b) = eta^2 q(a, b) + eta (1 - eta) ([b = 0] q(a|x) + [a = 0] q(b|y))
                  + (1 - eta)^2 [a = 0][b = 0].
    """
    if dist.n_parties != 2:
        raise ValueError("the detection model is two-party")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("efficiency must lie in [0, 1]")
    table = {}
    for ins, arr in dist.table.items():
        a_marg = arr.sum(axis=1)
        b_marg = arr.sum(axis=0)
        new = eta * eta * arr.copy()
        new[:, 0] += eta * (1.0 - eta) * a_marg
        new[0, :] += eta * (1.0 - eta) * b_marg
        new[0, 0] += (1.0 - eta) ** 2
        table[ins] = new
    return Distribution(table, _detection=(eta, dist))


def mark_no_click(dist: Distribution, party: int, x: int) -> Distribution:
    """Split the no-click mass of one (party, input) into an explicit extra outcome.

    ``dist`` must come from :func:`apply_detection_efficiency`; the new last
    outcome at that input collects exactly the events where that party's
    detector did not fire, so summing it back into outcome 0 recovers
    ``dist``.  Marking twice is rejected.
    """
    if dist._detection is None:
        raise ValueError("no detection model recorded; mark after applying one")
    if len(dist._detection) != 2:
        raise ValueError("no-click outcome already marked")
    eta, ideal = dist._detection
    if party not in (0, 1):
        raise ValueError("unknown party")
    if not 0 <= x < dist.n_inputs[party]:
        raise ValueError("unknown input")
    other = 1 - party
    table = {ins: arr.copy() for ins, arr in dist.table.items()}
    for ins, arr in ideal.table.items():
        if ins[party] != x:
            continue
        marked_marg = arr.sum(axis=other)
        other_marg = arr.sum(axis=party)
        shape = list(arr.shape)
        shape[party] += 1
        new = np.zeros(shape)
        # Both detectors fire.
        body = [slice(0, n) for n in arr.shape]
        new[tuple(body)] = eta * eta * arr
        # Only the marked party fires; the other folds to outcome 0.
        idx = [slice(None), slice(None)]
        idx[other] = 0
        idx[party] = slice(0, arr.shape[party])
        new[tuple(idx)] += eta * (1.0 - eta) * marked_marg
        # The marked party misses: its explicit last slot, split over the
        # other's outcome (folded to 0 when that detector misses too).
        tail = eta * (1.0 - eta) * other_marg.copy()
        tail[0] += (1.0 - eta) ** 2
        idx[party] = arr.shape[party]
        idx[other] = slice(None)
        new[tuple(idx)] = tail
        table[ins] = new
    return Distribution(table, _detection=(eta, ideal, (party, x)))


@dataclass(frozen=True)
class BellExpression:
    """A linear combination of full correlators, sum_k c_k <prod O_{p, x_p}>."""

    kind: str
    terms: tuple[tuple[tuple[tuple[int, int], ...], float], ...]

    def coefficients(self) -> dict[tuple[tuple[int, int], ...], float]:
        out: dict[tuple[tuple[int, int], ...], float] = {}
        for involved, coeff in self.terms:
            key = tuple(sorted(involved))
            out[key] = out.get(key, 0.0) + coeff
        return {k: v for k, v in out.items() if abs(v) > 1e-15}


def chsh() -> BellExpression:
    terms = tuple(
        (((0, x), (1, y)), -1.0 if x == 1 and y == 1 else 1.0)
        for x in range(2)
        for y in range(2)
    )
    return BellExpression("chsh", terms)


def asymmetric_chsh(alpha: float) -> BellExpression:
    """alpha (<A0B0> + <A0B1>) + <A1B0> - <A1B1>."""
    terms = (
        (((0, 0), (1, 0)), float(alpha)),
        (((0, 0), (1, 1)), float(alpha)),
        (((0, 1), (1, 0)), 1.0),
        (((0, 1), (1, 1)), -1.0),
    )
    return BellExpression(f"asymmetric-chsh({alpha})", terms)


def holz() -> BellExpression:
    """<A1 B+ C+> - <A0 (B- + C-)> - <B- C->, with X+- = (X0 +- X1) / 2.

    Local bound 1, quantum maximum 3/2 (reached by the GHZ state).
    """
    terms = []
    for y, z in itertools.product(range(2), repeat=2):
        terms.append((((0, 1), (1, y), (2, z)), 0.25))
    for y in range(2):
        sign = 1.0 if y == 0 else -1.0
        terms.append((((0, 0), (1, y)), -0.5 * sign))
        terms.append((((0, 0), (2, y)), -0.5 * sign))
    for y, z in itertools.product(range(2), repeat=2):
        sign = (1.0 if y == 0 else -1.0) * (1.0 if z == 0 else -1.0)
        terms.append((((1, y), (2, z)), -0.25 * sign))
    return BellExpression("holz", tuple(terms))


def bell_value(dist: Distribution, expr: BellExpression) -> float:
    total = 0.0
    for involved, coeff in expr.terms:
        total += coeff * dist.correlator(dict(involved))
    return total


def chsh_game_score(dist: Distribution) -> float:
    """Probability of a XOR b = x AND y under uniform binary inputs; (S + 4) / 8."""
    return (bell_value(dist, chsh()) + 4.0) / 8.0


def conditional_entropy(
    dist: Distribution, key_inputs: tuple[int, int], flip: float = 0.0
) -> float:
    """H(A | B) in bits at one input pair, after flipping A's bit with probability ``flip``.

    This is the error-correction cost term: B's alphabet at ``key_inputs``
    may include the explicit no-click outcome.
    """
    if dist.n_parties != 2:
        raise ValueError("conditional entropy is evaluated on two-party behaviours")
    if not 0.0 <= flip <= 0.5:
        raise ValueError("flip probability must lie in [0, 1/2]")
    joint = dist.table[tuple(key_inputs)]
    if joint.shape[0] != 2:
        raise ValueError("the key outcome must be binary")
    if flip > 0.0:
        joint = (1.0 - flip) * joint + flip * joint[::-1, :]
    h = 0.0
    for b in range(joint.shape[1]):
        pb = joint[:, b].sum()
        if pb > 0.0:
            h += pb * _binary_entropy(joint[0, b] / pb)
    return h


def analytic_chsh_rate(omega: float) -> float:
    """Closed-form entropy bound 1 - h(1/2 + sqrt((S/2)^2 - 1) / 2) at CHSH score omega."""
    lo, hi = 0.75, (2.0 + math.sqrt(2.0)) / 4.0
    if not lo - 1e-12 <= omega <= hi + 1e-12:
        raise ValueError(f"score {omega} outside [{lo}, {hi}]")
    s_half = max(4.0 * min(omega, hi) - 2.0, 1.0)
    return 1.0 - _binary_entropy(0.5 + 0.5 * math.sqrt(s_half * s_half - 1.0))


def key_entropy_exact(
    strategy: QubitStrategy, x_star: int, flip: float = 0.0
) -> float:
    """True H(A | E) for a pure-state strategy: Eve's purification is trivial,
    so it equals the Shannon entropy of A's (optionally flipped) key outcome."""
    strategy.state_vector()  # raises if the state is mixed
    marg = strategy_distribution(strategy).marginal(0, x_star)
    p0 = (1.0 - flip) * marg[0] + flip * marg[1]
    return _binary_entropy(p0)


def joint_entropy_exact(
    strategy: QubitStrategy, key_inputs: tuple[int, int], flip: float = 0.0
) -> float:
    """True H(AB | E) for a pure-state strategy, with A's bit flipped with probability ``flip``."""
    strategy.state_vector()
    joint = strategy_distribution(strategy).table[tuple(key_inputs)]
    joint = joint.reshape(joint.shape[0], -1)
    if flip > 0.0:
        joint = (1.0 - flip) * joint + flip * joint[::-1, :]
    return _shannon(joint.ravel())


def moment_vector(
    strategy: QubitStrategy,
    words: list[Word],
    z_values: dict[int, float] | None = None,
) -> np.ndarray:
    """True expectation values <psi| w |psi> of canonical words under a strategy.

    Z letters are substituted by scalars ``z_values[index]`` (default 0),
    which always commute with the measurements, so the resulting vector is
    a valid moment assignment for any relaxation built over these words.
    """
    z_values = z_values or {}
    rho = strategy.density_matrix()
    dim = strategy.dim
    cache: dict = {}

    def sym_matrix(sym):
        key = (sym.party, sym.input, sym.outcome)
        if key not in cache:
            p = _PARTY_INDEX[sym.party]
            if p >= strategy.n_parties:
                raise ValueError(f"strategy has no party {sym.party}")
            cache[key] = strategy.full_projector(p, sym.input, sym.outcome)
        return cache[key]

    out = np.empty(len(words))
    for i, w in enumerate(words):
        if w.is_zero:
            out[i] = 0.0
            continue
        scalar = 1.0
        mat = np.eye(dim)
        for sym in w.symbols:
            if sym.party == "Z":
                scalar *= z_values.get(sym.outcome, 0.0)
            else:
                mat = mat @ sym_matrix(sym)
        out[i] = scalar * np.trace(rho @ mat)
    return out


def chsh_optimal_strategy() -> QubitStrategy:
    """Singlet-type strategy reaching the Tsirelson score (2 + sqrt 2) / 4."""
    return QubitStrategy(
        state_angle=math.pi / 4,
        angles=((0.0, math.pi / 2), (math.pi / 4, -math.pi / 4)),
    )


def asymmetric_chsh_optimal_strategy(alpha: float) -> QubitStrategy:
    """Reaches the quantum maximum 2 sqrt(1 + alpha^2) for alpha > 0."""
    beta = math.atan(1.0 / alpha)
    return QubitStrategy(
        state_angle=math.pi / 4,
        angles=((0.0, math.pi / 2), (beta, -beta)),
    )


def holz_optimal_strategy() -> QubitStrategy:
    """GHZ strategy with value 3/2: A0 = -Z, A1 = X, B and C at 60 / 120 degrees."""
    return QubitStrategy(
        state_angle=math.pi / 4,
        angles=(
            (math.pi, math.pi / 2),
            (math.pi / 3, 2 * math.pi / 3),
            (math.pi / 3, 2 * math.pi / 3),
        ),
    )


def optimize_strategy(
    objective,
    n_inputs: tuple[int, ...] = (2, 2),
    start: QubitStrategy | None = None,
    grid: int = 0,
    maxiter: int = 200,
):
    """Maximize ``objective(strategy)`` over state angle and measurement angles.

    A coarse angle grid (``grid`` points per parameter, skipped when 0)
    seeds a Nelder-Mead refinement from the best point; ``start`` is always
    included as a seed.  Returns (best strategy, best value).  Objectives
    are typically expensive (each may solve a relaxation), so keep ``grid``
    small or rely on a good ``start``.
    """
    n_params = 1 + sum(n_inputs)

    def unpack(vec) -> QubitStrategy:
        angles = []
        k = 1
        for n in n_inputs:
            angles.append(tuple(vec[k : k + n]))
            k += n
        return QubitStrategy(state_angle=float(vec[0]), angles=tuple(angles))

    def pack(s: QubitStrategy) -> np.ndarray:
        return np.array([s.state_angle] + [a for row in s.angles for a in row])

    seeds = []
    if start is not None:
        seeds.append(pack(start))
    if grid > 0:
        axes = [np.linspace(0.0, math.pi, grid, endpoint=False)] * n_params
        seeds.extend(np.array(pt) for pt in itertools.product(*axes))
    if not seeds:
        seeds.append(pack(chsh_optimal_strategy() if len(n_inputs) == 2 else holz_optimal_strategy()))

    best_vec, best_val = None, -math.inf
    for vec in seeds:
        val = objective(unpack(vec))
        if val > best_val:
            best_vec, best_val = vec, val

    res = minimize(
        lambda v: -objective(unpack(v)),
        best_vec,
        method="Nelder-Mead",
        options={"maxiter": maxiter, "xatol": 1e-6, "fatol": 1e-9},
    )
    if -res.fun > best_val:
        best_vec, best_val = res.x, -res.fun
    return unpack(best_vec), best_val
