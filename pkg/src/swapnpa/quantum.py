"""Dense simulation of the four-qubit swapping line ``A - B1 B2 - C``.

Tensor factors are ordered ``A (x) B1 (x) B2 (x) C``; Bob's measurement acts
on the two middle qubits. Dichotomic observables ``O`` are turned into
projectors ``(I + a O) / 2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import reduce
from typing import Sequence

import numpy as np

from .monomials import ALICE, CHARLIE, Monomial
from .scenario import (
    BOB_OUTCOMES,
    CoefficientMatrix,
    CorrelatorTable,
    DomainError,
    ProbabilityTable,
    Scenario,
    correlators_from_probabilities,
)

HERMITIAN_TOL = 1e-12
POVM_TOL = 1e-10
PSD_TOL = 1e-12
NEGATIVE_PROB_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SX, SY, SZ)

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


class NormalizationError(DomainError):
    """A column of the coefficient matrix is zero, so Charlie's direction is undefined."""


class SetupError(ValueError):
    pass


def kron(*ops) -> np.ndarray:
    return reduce(np.kron, ops)


def hermitize(M: np.ndarray) -> np.ndarray:
    """Symmetrize ``(M + M^+) / 2`` after checking the drift is below 1e-12."""
    M = np.asarray(M, dtype=complex)
    drift = np.max(np.abs(M - M.conj().T)) if M.size else 0.0
    if drift > HERMITIAN_TOL * max(1.0, np.max(np.abs(M))):
        raise SetupError(f"operator is not Hermitian (drift {drift:.3e})")
    return (M + M.conj().T) / 2


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def bell_povm() -> tuple[np.ndarray, ...]:
    """Bob's four Bell projectors written through their Pauli expansions.

    ``B_b = (II + s_x XX + s_y YY + s_z ZZ) / 4`` with sign patterns
    ``(-,+,+), (+,-,+), (+,+,-), (-,-,-)`` for ``b = 1..4``, so that the
    singlet is the last outcome, the one whose sign factor is ``+1`` for
    every ``x``.
    """
    signs = ((-1, 1, 1), (1, -1, 1), (1, 1, -1), (-1, -1, -1))
    II = np.eye(4, dtype=complex)
    return tuple(
        (II + sx * kron(SX, SX) + sy * kron(SY, SY) + sz * kron(SZ, SZ)) / 4 for sx, sy, sz in signs
    )


def bloch_observable(direction: Sequence[float]) -> np.ndarray:
    return sum(c * s for c, s in zip(direction, PAULIS))


@dataclass(frozen=True)
class NoiseModel:
    v_E: float = 1.0
    v_I: float = 1.0

    def __post_init__(self):
        for name in ("v_E", "v_I"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")

    @property
    def correlator_scale(self) -> float:
        return self.v_E ** 2 * self.v_I


@dataclass(frozen=True, eq=False)
class QuantumSetup:
    """States and measurements of one swapping experiment.

    ``alice_observables`` and ``charlie_observables`` are 2x2 Hermitian
    matrices with spectrum in [-1, 1]; ``bob_povm`` holds four 4x4 effects.
    """

    rho_AB1: np.ndarray
    rho_B2C: np.ndarray
    alice_observables: tuple[np.ndarray, ...]
    bob_povm: tuple[np.ndarray, ...]
    charlie_observables: tuple[np.ndarray, ...]
    standard: bool = False

    def __post_init__(self):
        for name in ("rho_AB1", "rho_B2C"):
            rho = hermitize(getattr(self, name))
            if rho.shape != (4, 4):
                raise SetupError(f"{name} must be 4x4")
            if abs(np.trace(rho).real - 1) > PSD_TOL * 10:
                raise SetupError(f"{name} has trace {np.trace(rho).real}")
            if np.linalg.eigvalsh(rho).min() < -PSD_TOL * 10:
                raise SetupError(f"{name} is not positive semidefinite")
            object.__setattr__(self, name, rho)
        if len(self.bob_povm) != BOB_OUTCOMES:
            raise SetupError("Bob's measurement needs four effects")
        povm = tuple(hermitize(B) for B in self.bob_povm)
        if np.max(np.abs(sum(povm) - np.eye(4))) > POVM_TOL:
            raise SetupError("Bob's effects do not sum to the identity")
        if any(np.linalg.eigvalsh(B).min() < -PSD_TOL * 10 for B in povm):
            raise SetupError("Bob's effects must be positive semidefinite")
        object.__setattr__(self, "bob_povm", povm)
        for name in ("alice_observables", "charlie_observables"):
            obs = tuple(hermitize(O) for O in getattr(self, name))
            for O in obs:
                ev = np.linalg.eigvalsh(O)
                if O.shape != (2, 2) or ev.min() < -1 - PSD_TOL * 10 or ev.max() > 1 + PSD_TOL * 10:
                    raise SetupError(f"{name} must be 2x2 with spectrum in [-1, 1]")
            object.__setattr__(self, name, obs)

    @property
    def m(self) -> int:
        return len(self.alice_observables)

    @property
    def n(self) -> int:
        return len(self.charlie_observables)

    @property
    def state(self) -> np.ndarray:
        return np.kron(self.rho_AB1, self.rho_B2C)

    def alice_projector(self, x: int, a: int = 1) -> np.ndarray:
        return (I2 + a * self.alice_observables[x - 1]) / 2

    def charlie_projector(self, z: int, c: int = 1) -> np.ndarray:
        return (I2 + c * self.charlie_observables[z - 1]) / 2

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        def enc(M):
            return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(M)]

        return {
            "rho_AB1": enc(self.rho_AB1),
            "rho_B2C": enc(self.rho_B2C),
            "alice_observables": [enc(O) for O in self.alice_observables],
            "bob_povm": [enc(B) for B in self.bob_povm],
            "charlie_observables": [enc(O) for O in self.charlie_observables],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QuantumSetup":
        def dec(rows):
            arr = np.asarray(rows, dtype=float)
            return arr[..., 0] + 1j * arr[..., 1]

        return cls(
            rho_AB1=dec(doc["rho_AB1"]),
            rho_B2C=dec(doc["rho_B2C"]),
            alice_observables=tuple(dec(O) for O in doc["alice_observables"]),
            bob_povm=tuple(dec(B) for B in doc["bob_povm"]),
            charlie_observables=tuple(dec(O) for O in doc["charlie_observables"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "QuantumSetup":
        return cls.from_dict(json.loads(text))


def charlie_directions(E: CoefficientMatrix) -> np.ndarray:
    """Unit Bloch vectors ``-e[:, z] / |e[:, z]|`` as rows, one per Charlie setting."""
    cols = np.asarray(E.entries, dtype=float).T
    norms = np.linalg.norm(cols, axis=1)
    if np.any(norms == 0):
        bad = [int(z) + 1 for z in np.flatnonzero(norms == 0)]
        raise NormalizationError(f"coefficient matrix column(s) {bad} vanish")
    return -cols / norms[:, None]


def standard_setup(scenario: Scenario, E: CoefficientMatrix) -> QuantumSetup:
    """Closed-form complex strategy: Pauli settings for Alice, Bell measurement, two ``|Phi+>``."""
    E.check_scenario(scenario)
    rho = projector(PHI_PLUS)
    return QuantumSetup(
        rho_AB1=rho,
        rho_B2C=rho,
        alice_observables=PAULIS[: scenario.m],
        bob_povm=bell_povm(),
        charlie_observables=tuple(bloch_observable(v) for v in charlie_directions(E)),
        standard=True,
    )


def compute_probabilities(setup: QuantumSetup) -> ProbabilityTable:
    """``P(a, b, c | x, z) = tr[(rho_AB1 (x) rho_B2C)(A_a|x (x) B_b (x) C_c|z)]``."""
    m, n = setup.m, setup.n
    # contract Bob first: sigma_b = tr_B[rho (I (x) B_b (x) I)] on (A, C)
    rho = setup.state.reshape([2, 4, 2] * 2)  # (A, B, C) row and column indices
    out = np.empty((2, BOB_OUTCOMES, 2, m, n))
    for bi, B in enumerate(setup.bob_povm):
        sigma = np.einsum("iqkjpl,pq->ikjl", rho, B).reshape(4, 4)
        for x in range(1, m + 1):
            for z in range(1, n + 1):
                for ai, a in enumerate((1, -1)):
                    for ci, c in enumerate((1, -1)):
                        op = np.kron(setup.alice_projector(x, a), setup.charlie_projector(z, c))
                        out[ai, bi, ci, x - 1, z - 1] = np.real(np.trace(sigma @ op))
    if out.min() < -NEGATIVE_PROB_TOL:
        raise SetupError(f"negative probability {out.min():.3e}")
    return ProbabilityTable(np.clip(out, 0.0, None))


def correlators(setup: QuantumSetup) -> CorrelatorTable:
    return correlators_from_probabilities(compute_probabilities(setup))


def apply_noise(setup: QuantumSetup, noise: NoiseModel) -> QuantumSetup:
    """White noise on both sources and on Bob's measurement."""
    if not setup.standard:
        raise SetupError("noise is defined for the standard Bell-state setup")
    mix = np.eye(4) / 4
    rho = noise.v_E * projector(PHI_PLUS) + (1 - noise.v_E) * mix
    povm = tuple(noise.v_I * B + (1 - noise.v_I) * mix for B in bell_povm())
    return replace(setup, rho_AB1=rho, rho_B2C=rho, bob_povm=povm)


def critical_visibility(R: float) -> dict:
    """Visibilities beyond which the real bound is violated: ``v_E^2 v_I > R``."""
    if not 0.0 < R < 1.0:
        raise DomainError(f"ratio must lie in (0, 1), got {R}")
    return {
        "surface": "v_E**2 * v_I = R",
        "R": R,
        "v_E_at_v_I_1": float(np.sqrt(R)),
        "v_I_at_v_E_1": float(R),
    }


# -- moments for the SDP feasibility cross-check ------------------------------

def _word_operator(setup: QuantumSetup, mono: Monomial) -> np.ndarray:
    proj = setup.alice_projector if mono.side == ALICE else setup.charlie_projector
    return reduce(np.matmul, [proj(i) for i in mono.word], I2)


def charlie_marginals(setup: QuantumSetup) -> np.ndarray:
    """``c_i = P(c = 1 | z = i)``, the values of the scalar symbols."""
    rho_C = np.trace(setup.rho_B2C.reshape(2, 2, 2, 2), axis1=0, axis2=2)
    return np.array([np.real(np.trace(rho_C @ setup.charlie_projector(z))) for z in range(1, setup.n + 1)])


def moment_vector(setup: QuantumSetup, problem) -> np.ndarray:
    """Real moments ``d^b[alpha, gamma]`` of ``setup`` laid out as ``problem``'s variables.

    Scalar symbols take the values :func:`charlie_marginals`.
    """
    cvals = charlie_marginals(setup)
    rho = setup.state.reshape([2, 4, 2] * 2)
    sigmas = [np.einsum("iqkjpl,pq->ikjl", rho, B).reshape(4, 4) for B in setup.bob_povm]
    d = np.empty(problem.n_vars)
    nk = problem.n_keys
    for k, (alpha, gamma) in enumerate(problem.keys):
        op = np.kron(_word_operator(setup, alpha), _word_operator(setup, gamma))
        scale = np.prod([cvals[i - 1] for i in gamma.scalars]) if gamma.scalars else 1.0
        for b in range(BOB_OUTCOMES):
            d[b * nk + k] = scale * np.real(np.trace(sigmas[b] @ op))
    return d


def dump_moments(setup: QuantumSetup, problem) -> dict:
    """``{"b|alpha|gamma": value}`` keyed by the debug rendering of the monomials."""
    from .monomials import render

    d = moment_vector(setup, problem)
    out = {}
    for b in range(1, BOB_OUTCOMES + 1):
        for k, (alpha, gamma) in enumerate(problem.keys):
            out[f"{b}|{render(alpha)}|{render(gamma)}"] = float(d[(b - 1) * problem.n_keys + k])
    return out
