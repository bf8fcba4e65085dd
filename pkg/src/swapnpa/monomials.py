"""Canonical words over Alice/Charlie projectors and commuting scalar symbols.

A monomial on the Alice side is a word in the projectors ``A_{1|x}``; on the
Charlie side it is a word in ``C_{1|z}`` times a (commuting) product of the
scalar symbols ``c_i``. Projectors are self-adjoint and idempotent, so the
only rewriting applied is collapsing adjacent repeated letters.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

ALICE = "A"
CHARLIE = "C"
IDENTITY_LETTER = 0


class SideMismatch(ValueError):
    pass


def _collapse(word: Iterable[int]) -> tuple[int, ...]:
    out: list[int] = []
    for letter in word:
        if letter == IDENTITY_LETTER:
            continue
        if out and out[-1] == letter:
            continue
        out.append(letter)
    return tuple(out)


@dataclass(frozen=True, order=False)
class Monomial:
    """A canonical monomial.

    ``word`` holds 1-based projector setting indices (``0`` would be the
    identity and never survives canonicalization); ``scalars`` holds the
    sorted indices of scalar symbols. Scalars only exist on the Charlie side.
    """

    side: str
    word: tuple[int, ...] = ()
    scalars: tuple[int, ...] = ()

    def __post_init__(self):
        if self.side not in (ALICE, CHARLIE):
            raise ValueError(f"unknown side {self.side!r}")
        if self.scalars and self.side != CHARLIE:
            raise ValueError("scalar symbols only appear in Charlie-side monomials")

    @property
    def is_identity(self) -> bool:
        return not self.word and not self.scalars

    @property
    def degree(self) -> int:
        return len(self.word)

    def sort_key(self) -> tuple:
        return (len(self.word), self.word, len(self.scalars), self.scalars)

    def __lt__(self, other: "Monomial") -> bool:
        return self.sort_key() < other.sort_key()

    def adjoint(self) -> "Monomial":
        return adjoint(self)

    def __mul__(self, other: "Monomial") -> "Monomial":
        return multiply(self, other)

    def __str__(self) -> str:
        return render(self)

    def __repr__(self) -> str:
        return f"Monomial({render(self)})"


def canonicalize(side: str, raw_word: Sequence[int] = (), raw_scalars: Iterable[int] = ()) -> Monomial:
    """Build the canonical monomial for a raw word and scalar multiset."""
    return Monomial(side, _collapse(raw_word), tuple(sorted(raw_scalars)))


def identity(side: str) -> Monomial:
    return Monomial(side)


def adjoint(mono: Monomial) -> Monomial:
    return Monomial(mono.side, _collapse(reversed(mono.word)), mono.scalars)


def multiply(m1: Monomial, m2: Monomial) -> Monomial:
    if m1.side != m2.side:
        raise SideMismatch(f"cannot multiply {m1.side}-side and {m2.side}-side monomials")
    return Monomial(m1.side, _collapse(m1.word + m2.word), tuple(sorted(m1.scalars + m2.scalars)))


def render(mono: Monomial) -> str:
    """Stable debug rendering, e.g. ``"A1A2"``, ``"c1*C2C3"``, ``"c1*c2"``, ``"I"``."""
    letters = "".join(f"{mono.side}{i}" for i in mono.word)
    parts = [f"c{i}" for i in mono.scalars]
    if letters:
        parts.append(letters)
    return "*".join(parts) if parts else "I"


def parse(text: str) -> Monomial:
    """Inverse of :func:`render`."""
    text = text.strip()
    if text == "I":
        raise ValueError("the side of a bare identity is ambiguous; use identity(side)")
    scalars: list[int] = []
    word: list[int] = []
    side = None
    for part in text.split("*"):
        if part.startswith("c"):
            scalars.append(int(part[1:]))
            continue
        side = part[0]
        if side not in (ALICE, CHARLIE):
            raise ValueError(f"cannot parse monomial {text!r}")
        word.extend(int(tok) for tok in part.split(side)[1:])
    if side is None:
        side = CHARLIE
    return canonicalize(side, word, scalars)


def _words(letters: int, degree: int) -> list[tuple[int, ...]]:
    found = set()
    for length in range(degree + 1):
        for raw in product(range(1, letters + 1), repeat=length):
            found.add(_collapse(raw))
    return sorted(found, key=lambda w: (len(w), w))


@dataclass(frozen=True)
class MonomialSet:
    """Ordered, duplicate-free list of monomials with the identity first."""

    side: str
    elements: tuple[Monomial, ...]

    def __post_init__(self):
        if not self.elements or not self.elements[0].is_identity:
            raise ValueError("a monomial set starts with the identity")
        if len(set(self.elements)) != len(self.elements):
            raise ValueError("monomial set elements must be distinct")

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i: int) -> Monomial:
        return self.elements[i]

    def index(self, mono: Monomial) -> int:
        return self.elements.index(mono)

    def products(self) -> list[Monomial]:
        """Sorted distinct products ``u v^dagger`` over pairs of elements."""
        seen = {multiply(v, adjoint(u)) for u in self.elements for v in self.elements}
        return sorted(seen, key=Monomial.sort_key)


def build_alice_set(m: int, degree: int) -> MonomialSet:
    """All canonical words in ``A_{1|1..m}`` of length at most ``degree``."""
    if m < 1 or degree < 1:
        raise ValueError("m and degree must be positive")
    return MonomialSet(ALICE, tuple(Monomial(ALICE, w) for w in _words(m, degree)))


def build_charlie_set_extended(n: int, degree: int, scalar_extension: bool = True) -> MonomialSet:
    """Charlie words of length at most ``degree``, plus ``c_i I`` when extended."""
    if n < 1 or degree < 1:
        raise ValueError("n and degree must be positive")
    elements = [Monomial(CHARLIE, w) for w in _words(n, degree)]
    if scalar_extension:
        elements.extend(Monomial(CHARLIE, (), (i,)) for i in range(1, n + 1))
    elements.sort(key=Monomial.sort_key)
    return MonomialSet(CHARLIE, tuple(elements))
