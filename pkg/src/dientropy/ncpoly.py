"""Words and polynomials in party-labeled noncommuting operator symbols.

Measurement symbols are projectors (self-adjoint, idempotent, orthogonal
across outcomes of one input); Z symbols are free apart from commuting
with every measurement.  Distinct parties commute, so every word has a
unique canonical form with its symbols grouped into party blocks in the
fixed order A < B < C < Z, preserving the relative order inside a block.

Each d-outcome input is represented by d - 1 projector symbols; the last
projector is eliminated as identity minus the others at polynomial
construction time, which keeps completeness satisfied identically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Iterator

__all__ = [
    "Symbol",
    "Word",
    "NCPolynomial",
    "Scenario",
    "IDENTITY",
    "ZERO_WORD",
    "canonicalize",
    "adjoint",
    "multiply",
    "word_class",
    "meas",
    "zsym",
]

_PARTY_RANK = {"A": 0, "B": 1, "C": 2, "Z": 3}


@dataclass(frozen=True, order=False)
class Symbol:
    """One operator letter.

    Measurement symbols (parties A, B, C) carry an input and an outcome
    and are never starred.  Z symbols carry only an index (stored in
    ``outcome``, with ``input`` fixed to 0) plus the adjoint flag.
    """

    party: str
    input: int
    outcome: int
    star: bool = False

    def __post_init__(self):
        if self.party not in _PARTY_RANK:
            raise ValueError(f"unknown party {self.party!r}")
        if self.party != "Z" and self.star:
            raise ValueError("projector symbols are self-adjoint; star is Z-only")

    @property
    def rank(self) -> int:
        return _PARTY_RANK[self.party]

    @property
    def key(self) -> tuple:
        return (self.rank, self.input, self.outcome, self.star)

    def __str__(self) -> str:
        if self.party == "Z":
            return f"Z{self.outcome}{'*' if self.star else ''}"
        return f"{self.party}{self.outcome}|{self.input}"


def meas(party: str, input: int, outcome: int) -> Symbol:
    return Symbol(party, input, outcome)


def zsym(index: int, star: bool = False) -> Symbol:
    return Symbol("Z", 0, index, star)


@dataclass(frozen=True)
class Word:
    """Canonical product of symbols; ``is_zero`` marks the collapsed word."""

    symbols: tuple[Symbol, ...] = ()
    is_zero: bool = False

    @property
    def key(self) -> tuple:
        return (len(self.symbols), tuple(s.key for s in self.symbols))

    def __len__(self) -> int:
        return len(self.symbols)

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        if not self.symbols:
            return "1"
        return " ".join(str(s) for s in self.symbols)


IDENTITY = Word()
ZERO_WORD = Word(is_zero=True)


def _reduce(symbols: Iterable[Symbol]) -> Word:
    """Sort into party blocks and apply projector relations."""
    ordered = sorted(symbols, key=lambda s: s.rank)  # stable: in-block order kept
    stack: list[Symbol] = []
    for s in ordered:
        if s.party != "Z" and stack and stack[-1].party == s.party:
            top = stack[-1]
            if top == s:
                continue  # idempotent projector
            if top.input == s.input:
                return ZERO_WORD  # orthogonal outcomes of one input
        stack.append(s)
    return Word(tuple(stack))


def canonicalize(raw: Iterable[Symbol], scenario: "Scenario") -> Word:
    """Canonical form of a raw symbol list, validated against the scenario.

    Idempotent: canonicalizing a canonical word's symbols changes nothing.
    """
    syms = list(raw)
    for s in syms:
        scenario.check_symbol(s)
    return _reduce(syms)


def adjoint(w: Word) -> Word:
    """Reverse the word, toggle stars on Z symbols, re-canonicalize."""
    if w.is_zero:
        return w
    rev = [replace(s, star=not s.star) if s.party == "Z" else s for s in reversed(w.symbols)]
    return _reduce(rev)


def word_class(w: Word) -> Word:
    """Representative of {w, adjoint(w)}; moments of both share one real variable."""
    if w.is_zero:
        return w
    wa = adjoint(w)
    return w if w.key <= wa.key else wa


@dataclass(frozen=True)
class Scenario:
    """Operator algebra declaration: measurement arities plus Z letter count.

    ``outcomes[p][x]`` is the number of outcomes of party p's input x (so
    party p has ``len(outcomes[p])`` inputs).  ``n_z`` Z letters are
    available as Z_0 .. Z_{n_z - 1} together with their adjoints.
    """

    outcomes: tuple[tuple[int, ...], ...]
    n_z: int = 0

    def __post_init__(self):
        if not 1 <= len(self.outcomes) <= 3:
            raise ValueError("between 1 and 3 measurement parties supported")
        for per_input in self.outcomes:
            if len(per_input) == 0:
                raise ValueError("each party needs at least one input")
            for d in per_input:
                if d < 2:
                    raise ValueError("each input needs at least two outcomes")
        if self.n_z < 0:
            raise ValueError("n_z must be nonnegative")

    @property
    def parties(self) -> str:
        return "ABC"[: len(self.outcomes)]

    def n_outcomes(self, party: str, input: int) -> int:
        return self.outcomes[self.parties.index(party)][input]

    def check_symbol(self, s: Symbol) -> None:
        if s.party == "Z":
            if not 0 <= s.outcome < self.n_z:
                raise ValueError(f"undeclared Z index in {s}")
            return
        if s.party not in self.parties:
            raise ValueError(f"undeclared party in {s}")
        per_input = self.outcomes[self.parties.index(s.party)]
        if not 0 <= s.input < len(per_input):
            raise ValueError(f"undeclared input in {s}")
        # only the d-1 retained projectors exist as symbols
        if not 0 <= s.outcome < per_input[s.input] - 1:
            raise ValueError(f"undeclared outcome in {s} (last outcome is eliminated)")

    def measurement_symbols(self) -> list[Symbol]:
        out = []
        for p, per_input in zip(self.parties, self.outcomes):
            for x, d in enumerate(per_input):
                out.extend(Symbol(p, x, a) for a in range(d - 1))
        return out

    def z_symbols(self) -> list[Symbol]:
        out = []
        for a in range(self.n_z):
            out.append(zsym(a, False))
            out.append(zsym(a, True))
        return out

    def all_symbols(self) -> list[Symbol]:
        return self.measurement_symbols() + self.z_symbols()

    def with_z(self, n_z: int) -> "Scenario":
        return Scenario(self.outcomes, n_z)

    def one(self) -> "NCPolynomial":
        return NCPolynomial(self, {IDENTITY: 1.0})

    def zero(self) -> "NCPolynomial":
        return NCPolynomial(self, {})

    def word(self, *symbols: Symbol) -> "NCPolynomial":
        return NCPolynomial(self, {canonicalize(symbols, self): 1.0})

    def projector(self, party: str, input: int, outcome: int) -> "NCPolynomial":
        """M_{outcome|input} as a polynomial; expands the eliminated last outcome."""
        d = self.n_outcomes(party, input)
        if not 0 <= outcome < d:
            raise ValueError(f"outcome {outcome} out of range for {party} input {input}")
        if outcome < d - 1:
            return self.word(Symbol(party, input, outcome))
        poly = self.one()
        for a in range(d - 1):
            poly = poly - self.word(Symbol(party, input, a))
        return poly


class NCPolynomial:
    """Complex linear combination of canonical words over one scenario.

    Immutable by convention; arithmetic returns fresh objects.  Zero
    coefficients and the zero word are never stored.
    """

    __slots__ = ("scenario", "_terms")

    def __init__(self, scenario: Scenario, terms: dict[Word, complex]):
        self.scenario = scenario
        self._terms = {
            w: complex(c) for w, c in terms.items() if not w.is_zero and c != 0
        }

    def items(self) -> Iterator[tuple[Word, complex]]:
        return iter(self._terms.items())

    @property
    def terms(self) -> dict[Word, complex]:
        return dict(self._terms)

    def coefficient(self, w: Word) -> complex:
        return self._terms.get(w, 0j)

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, NCPolynomial)
            and self.scenario == other.scenario
            and self._terms == other._terms
        )

    def __hash__(self):
        return hash((self.scenario, frozenset(self._terms.items())))

    def _check_same_algebra(self, other: "NCPolynomial") -> None:
        if self.scenario != other.scenario:
            raise ValueError("polynomials over different algebras")

    def __add__(self, other: "NCPolynomial") -> "NCPolynomial":
        self._check_same_algebra(other)
        out = dict(self._terms)
        for w, c in other._terms.items():
            out[w] = out.get(w, 0j) + c
        return NCPolynomial(self.scenario, out)

    def __sub__(self, other: "NCPolynomial") -> "NCPolynomial":
        return self + (-1.0) * other

    def __rmul__(self, scalar: complex) -> "NCPolynomial":
        return NCPolynomial(self.scenario, {w: scalar * c for w, c in self._terms.items()})

    def __mul__(self, other: "NCPolynomial") -> "NCPolynomial":
        return multiply(self, other)

    def adjoint(self) -> "NCPolynomial":
        return NCPolynomial(
            self.scenario, _merge((adjoint(w), c.conjugate()) for w, c in self._terms.items())
        )

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        adj = self.adjoint()
        words = set(self._terms) | set(adj._terms)
        return all(abs(self.coefficient(w) - adj.coefficient(w)) <= tol for w in words)

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for w in sorted(self._terms, key=lambda w: w.key):
            parts.append(f"({self._terms[w]:g})*[{w}]")
        return " + ".join(parts)

    __repr__ = __str__


def _merge(pairs: Iterable[tuple[Word, complex]]) -> dict[Word, complex]:
    out: dict[Word, complex] = {}
    for w, c in pairs:
        if w.is_zero:
            continue
        out[w] = out.get(w, 0j) + c
    return out


def multiply(p: NCPolynomial, q: NCPolynomial) -> NCPolynomial:
    """Distribute, canonicalize each product word, merge coefficients."""
    p._check_same_algebra(q)
    out: dict[Word, complex] = {}
    for wp, cp in p.items():
        for wq, cq in q.items():
            prod = _reduce(wp.symbols + wq.symbols)
            if prod.is_zero:
                continue
            out[prod] = out.get(prod, 0j) + cp * cq
    return NCPolynomial(p.scenario, out)
