"""Scenario description, coefficient matrices and the correlation functional.

Outcome conventions: Alice and Charlie output ``+1``/``-1``, Bob outputs
``1..4``. Settings are 1-based in the public API (``x = 1..m``, ``z = 1..n``)
and 0-based in array storage.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

BOB_OUTCOMES = 4
EPS_RATIO = 1e-8
PROB_SUM_TOL = 1e-9

# array axis position of an outcome a or c in {+1, -1}
OUTCOME_INDEX = {1: 0, -1: 1}
OUTCOME_SIGNS = np.array([1.0, -1.0])


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class DegenerateFunctional(ArithmeticError):
    """Raised when the complex bound vanishes and the ratio is undefined."""


class Theory(str, enum.Enum):
    REAL = "real"
    COMPLEX = "complex"


class SolverStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    NEAR_OPTIMAL = "near_optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_TROUBLE = "numerical_trouble"


@dataclass(frozen=True)
class Scenario:
    """An (m, n) entanglement-swapping scenario.

    Parameters
    ----------
    m : int
        Number of Alice settings. Only ``m = 3`` is supported.
    n : int
        Number of Charlie settings.
    hierarchy_degree : int
        Maximal word length of the Alice and Charlie monomial sets.
    causally_independent : bool
        Whether the independence of the two sources is imposed.
    """

    m: int = 3
    n: int = 3
    hierarchy_degree: int = 2
    causally_independent: bool = True
    bob_outcomes: int = field(default=BOB_OUTCOMES, init=False)

    def __post_init__(self):
        if self.m != 3:
            raise DomainError(f"only m = 3 Alice settings are supported, got m = {self.m}")
        if self.n < 1:
            raise DomainError(f"n must be positive, got {self.n}")
        if self.hierarchy_degree < 1:
            raise DomainError(f"hierarchy degree must be positive, got {self.hierarchy_degree}")

    @property
    def label(self) -> str:
        return f"({self.m},{self.n})"


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """The m x n real matrix ``e[x, z]`` weighting the correlators.

    Row ``x - 1`` belongs to Alice setting ``x``, column ``z - 1`` to Charlie
    setting ``z``.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2 or 0 in arr.shape:
            raise DomainError(f"coefficient matrix must be a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("coefficient matrix entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def check_scenario(self, scenario: Scenario) -> None:
        if self.shape != (scenario.m, scenario.n):
            raise DomainError(
                f"coefficient matrix has shape {self.shape}, scenario {scenario.label} needs "
                f"({scenario.m}, {scenario.n})"
            )

    def __mul__(self, c: float) -> "CoefficientMatrix":
        return CoefficientMatrix(self.entries * c)

    __rmul__ = __mul__

    def __add__(self, other: "CoefficientMatrix") -> "CoefficientMatrix":
        return CoefficientMatrix(self.entries + other.entries)

    def __eq__(self, other):
        if not isinstance(other, CoefficientMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash((self.shape, self.entries.tobytes()))

    def tolist(self) -> list[list[float]]:
        return self.entries.tolist()


@dataclass(frozen=True, eq=False)
class ProbabilityTable:
    """Joint distribution ``P(a, b, c | x, z)``.

    Stored as an array of shape ``(2, 4, 2, m, n)`` with axes
    ``(a, b, c, x, z)``; the ``a``/``c`` axes are ordered ``(+1, -1)``.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 5 or arr.shape[:3] != (2, BOB_OUTCOMES, 2):
            raise DomainError(f"probability table must have shape (2, 4, 2, m, n), got {arr.shape}")
        if np.any(arr < -PROB_SUM_TOL) or np.any(arr > 1 + PROB_SUM_TOL):
            raise DomainError("probabilities must lie in [0, 1]")
        sums = arr.sum(axis=(0, 1, 2))
        if np.max(np.abs(sums - 1.0)) > PROB_SUM_TOL:
            raise DomainError(f"probabilities do not normalize per (x, z): max deviation {np.max(np.abs(sums - 1))}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return self.values.shape[3]

    @property
    def n(self) -> int:
        return self.values.shape[4]

    def __call__(self, a: int, b: int, c: int, x: int, z: int) -> float:
        return float(self.values[OUTCOME_INDEX[a], b - 1, OUTCOME_INDEX[c], x - 1, z - 1])

    def alice_bob_marginal(self) -> np.ndarray:
        """``sum_b P(a, b | x)`` as an array over ``(a, x)``, read at ``z = 1``."""
        return self.values[..., 0].sum(axis=(1, 2))

    def bob_charlie_marginal(self) -> np.ndarray:
        """``sum_b P(b, c | z)`` as an array over ``(c, z)``, read at ``x = 1``."""
        return self.values[:, :, :, 0, :].sum(axis=(0, 1))

    def independence_residuals(self) -> np.ndarray:
        """Residuals of ``sum_b P(a,b,c|x,z) - P(a|x) P(c|z)`` over ``(a, c, x, z)``."""
        joint = self.values.sum(axis=1)
        pa = self.alice_bob_marginal()
        pc = self.bob_charlie_marginal()
        return joint - pa[:, None, :, None] * pc[None, :, None, :]


@dataclass(frozen=True, eq=False)
class CorrelatorTable:
    """Correlators ``S[b, x, z]``, stored 0-based with shape ``(4, m, n)``."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != BOB_OUTCOMES:
            raise DomainError(f"correlator table must have shape (4, m, n), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __call__(self, b: int, x: int, z: int) -> float:
        return float(self.values[b - 1, x - 1, z - 1])


@dataclass(frozen=True)
class BoundResult:
    value: float
    theory: Theory
    solver_status: SolverStatus
    duality_gap: float

    def __post_init__(self):
        if self.solver_status in (SolverStatus.OPTIMAL, SolverStatus.NEAR_OPTIMAL) and not np.isfinite(self.value):
            raise ValueError("a solved bound must have a finite value")

    @property
    def solved(self) -> bool:
        return self.solver_status in (SolverStatus.OPTIMAL, SolverStatus.NEAR_OPTIMAL)


def sign_factor(b: int, x: int) -> int:
    """Sign ``g(b, x)``: +1 if ``b == x`` or ``b == 4``, -1 otherwise."""
    if b not in (1, 2, 3, 4):
        raise DomainError(f"Bob outcome must be in 1..4, got {b}")
    if x not in (1, 2, 3):
        raise DomainError(f"Alice setting must be in 1..3, got {x}")
    return 1 if (b == x or b == 4) else -1


def sign_table(m: int = 3) -> np.ndarray:
    """``g(b, x)`` as a ``(4, m)`` array."""
    return np.array([[sign_factor(b, x) for x in range(1, m + 1)] for b in range(1, BOB_OUTCOMES + 1)], dtype=float)


def correlators_from_probabilities(p: ProbabilityTable) -> CorrelatorTable:
    """``S[b, x, z] = sum_{a, c} a c P(a, b, c | x, z)``."""
    signs = np.multiply.outer(OUTCOME_SIGNS, OUTCOME_SIGNS)
    return CorrelatorTable(np.einsum("ac,abcxz->bxz", signs, p.values))


def evaluate_F(E: CoefficientMatrix, S: CorrelatorTable) -> float:
    """Value of the functional ``sum_{x,z,b} g(b,x) e[x,z] S[b,x,z]``."""
    if S.values.shape[1:] != E.shape:
        raise DomainError(f"correlators of shape {S.values.shape[1:]} do not match E of shape {E.shape}")
    g = sign_table(E.shape[0])
    return float(np.einsum("bx,xz,bxz->", g, E.entries, S.values))


def ratio(F_r: float, F_q: float, eps: float = EPS_RATIO) -> float:
    """``F_r / F_q``; raises :class:`DegenerateFunctional` if ``F_q <= eps``."""
    if not F_q > eps:
        raise DegenerateFunctional(f"complex bound {F_q!r} is not above {eps}; ratio undefined")
    return F_r / F_q


# -- JSON configuration ------------------------------------------------------

def config_to_dict(scenario: Scenario, E: CoefficientMatrix | None = None) -> dict:
    doc = {
        "m": scenario.m,
        "n": scenario.n,
        "hierarchy_degree": scenario.hierarchy_degree,
        "causally_independent": scenario.causally_independent,
    }
    if E is not None:
        E.check_scenario(scenario)
        doc["E"] = E.tolist()
    return doc


def config_from_dict(doc: dict) -> tuple[Scenario, CoefficientMatrix | None]:
    try:
        scenario = Scenario(
            m=int(doc["m"]),
            n=int(doc["n"]),
            hierarchy_degree=int(doc.get("hierarchy_degree", 2)),
            causally_independent=bool(doc.get("causally_independent", True)),
        )
    except KeyError as exc:
        raise DomainError(f"configuration is missing field {exc}") from None
    E = None
    if doc.get("E") is not None:
        E = CoefficientMatrix(doc["E"])
        E.check_scenario(scenario)
    return scenario, E


def dump_config(scenario: Scenario, E: CoefficientMatrix | None = None) -> str:
    return json.dumps(config_to_dict(scenario, E))


def load_config(source: Union[str, Path]) -> tuple[Scenario, CoefficientMatrix | None]:
    """Read a configuration from a JSON string or a path to a JSON file."""
    text = str(source)
    if not text.lstrip().startswith("{"):
        text = Path(source).read_text()
    return config_from_dict(json.loads(text))
