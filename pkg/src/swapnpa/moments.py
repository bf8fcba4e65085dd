"""Scalar-extended moment matrices for the entanglement-swapping line.

For every Bob outcome ``b`` the matrix ``Gamma^b`` is indexed by pairs
``(alpha, gamma)`` from the Alice and Charlie monomial sets (Alice-major
order). Entry ``((a1, g1), (a2, g2))`` holds the real moment
``d^b[a2 a1^+, g2 g1^+]``; moments related by a simultaneous adjoint of both
words share a variable. Variables are numbered ``b * n_keys + key`` with
``b`` 0-based.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from itertools import permutations
from math import factorial
from typing import Mapping

import numpy as np
from scipy import sparse

from .monomials import (
    ALICE,
    CHARLIE,
    Monomial,
    MonomialSet,
    adjoint,
    build_alice_set,
    build_charlie_set_extended,
    identity,
    multiply,
)
from .scenario import (
    BOB_OUTCOMES,
    BoundResult,
    CoefficientMatrix,
    Scenario,
    SolverStatus,
    Theory,
    sign_factor,
)

log = logging.getLogger(__name__)

Key = tuple[Monomial, Monomial]


class StructureError(RuntimeError):
    """The moment problem lacks a variable that a constraint family needs."""


def canonical_key(alpha: Monomial, gamma: Monomial) -> Key:
    """Representative of ``(alpha, gamma)`` and ``(alpha^+, gamma^+)``."""
    other = (adjoint(alpha), adjoint(gamma))
    mine = (alpha, gamma)
    if (other[0].sort_key(), other[1].sort_key()) < (alpha.sort_key(), gamma.sort_key()):
        return other
    return mine


@dataclass(frozen=True)
class Equality:
    """``sum_k coeffs[k] * d[k] == rhs`` with integer variable indices."""

    coeffs: tuple[tuple[int, float], ...]
    rhs: float = 0.0
    label: str = ""

    def normalized(self) -> tuple:
        """Hashable form used to drop duplicated or trivial equalities."""
        acc: dict[int, float] = {}
        for k, c in self.coeffs:
            acc[k] = acc.get(k, 0.0) + c
        items = sorted((k, c) for k, c in acc.items() if c != 0.0)
        if items and items[0][1] < 0:
            return tuple((k, -c) for k, c in items), -self.rhs
        return tuple(items), self.rhs


@dataclass(frozen=True, eq=False)
class MomentProblem:
    """Symbolic moment problem; immutable once built.

    Attributes
    ----------
    keys : tuple of (Monomial, Monomial)
        Distinct moment keys shared by every Bob block.
    key_matrix : ndarray of int
        ``key_matrix[u, v]`` is the key index of entry ``(u, v)`` in each block.
    equalities : tuple of Equality
        Linear equalities over the ``4 * n_keys`` variables.
    objective : dict
        Sparse linear form ``{variable: coefficient}`` to maximize.
    """

    scenario: Scenario
    alice_set: MonomialSet
    charlie_set: MonomialSet
    keys: tuple[Key, ...]
    key_index: Mapping[Key, int]
    key_matrix: np.ndarray
    equalities: tuple[Equality, ...]
    objective: Mapping[int, float] = field(default_factory=dict)
    causal_applied: bool = False

    @property
    def n_keys(self) -> int:
        return len(self.keys)

    @property
    def n_vars(self) -> int:
        return BOB_OUTCOMES * len(self.keys)

    @property
    def block_dim(self) -> int:
        return len(self.alice_set) * len(self.charlie_set)

    def row_label(self, u: int) -> tuple[Monomial, Monomial]:
        nc = len(self.charlie_set)
        return self.alice_set[u // nc], self.charlie_set[u % nc]

    def row_index(self, alpha: Monomial, gamma: Monomial) -> int:
        return self.alice_set.index(alpha) * len(self.charlie_set) + self.charlie_set.index(gamma)

    def variable(self, b: int, alpha: Monomial, gamma: Monomial) -> int:
        """Variable index of ``d^b[alpha, gamma]`` for a 1-based Bob outcome."""
        try:
            k = self.key_index[canonical_key(alpha, gamma)]
        except KeyError:
            raise StructureError(f"no moment d[{alpha}, {gamma}] in this problem") from None
        return (b - 1) * self.n_keys + k

    def has_key(self, alpha: Monomial, gamma: Monomial) -> bool:
        return canonical_key(alpha, gamma) in self.key_index

    def block_variables(self, b: int) -> np.ndarray:
        """Variable index matrix of ``Gamma^b`` (1-based ``b``)."""
        return (b - 1) * self.n_keys + self.key_matrix

    def block_values(self, d: np.ndarray, b: int) -> np.ndarray:
        return np.asarray(d)[self.block_variables(b)]

    def summed_block(self, d: np.ndarray) -> np.ndarray:
        return sum(self.block_values(d, b) for b in range(1, BOB_OUTCOMES + 1))

    def equality_matrix(self) -> tuple[sparse.csr_matrix, np.ndarray]:
        rows, cols, vals = [], [], []
        for r, eq in enumerate(self.equalities):
            for k, c in eq.coeffs:
                rows.append(r)
                cols.append(k)
                vals.append(c)
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.equalities), self.n_vars))
        A.sum_duplicates()
        rhs = np.array([eq.rhs for eq in self.equalities], dtype=float)
        return A, rhs

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for k, v in self.objective.items():
            c[k] += v
        return c

    def equality_residuals(self, d: np.ndarray) -> np.ndarray:
        A, rhs = self.equality_matrix()
        return A @ np.asarray(d, dtype=float) - rhs


def _dedupe(equalities) -> tuple[Equality, ...]:
    seen = set()
    out = []
    for eq in equalities:
        norm = eq.normalized()
        if not norm[0]:
            if abs(norm[1]) > 0:
                raise StructureError(f"inconsistent equality {eq.label}")
            continue
        if norm in seen:
            continue
        seen.add(norm)
        out.append(eq)
    return tuple(out)


def build_moment_structure(scenario: Scenario) -> MomentProblem:
    """Lay out the blocks ``Gamma^b`` and add the normalization ``sum_b d^b[I,I] = 1``.

    The Charlie set carries the scalar symbols only when the scenario imposes
    causal independence.
    """
    A = build_alice_set(scenario.m, scenario.hierarchy_degree)
    C = build_charlie_set_extended(scenario.n, scenario.hierarchy_degree, scenario.causally_independent)
    na, nc = len(A), len(C)
    # products u v^+ for every ordered pair, per side
    a_prod = [[multiply(a2, adjoint(a1)) for a2 in A] for a1 in A]
    c_prod = [[multiply(g2, adjoint(g1)) for g2 in C] for g1 in C]

    key_index: dict[Key, int] = {}
    keys: list[Key] = []
    dim = na * nc
    K = np.empty((dim, dim), dtype=np.int64)
    for u in range(dim):
        a1, g1 = divmod(u, nc)
        for v in range(u, dim):
            a2, g2 = divmod(v, nc)
            key = canonical_key(a_prod[a1][a2], c_prod[g1][g2])
            idx = key_index.get(key)
            if idx is None:
                idx = key_index[key] = len(keys)
                keys.append(key)
            K[u, v] = K[v, u] = idx
    K.setflags(write=False)

    I_key = key_index[(identity(ALICE), identity(CHARLIE))]
    n_keys = len(keys)
    norm = Equality(tuple((b * n_keys + I_key, 1.0) for b in range(BOB_OUTCOMES)), 1.0, "normalization")
    log.debug("moment structure %s: block dim %d, %d keys", scenario.label, dim, n_keys)
    return MomentProblem(
        scenario=scenario,
        alice_set=A,
        charlie_set=C,
        keys=tuple(keys),
        key_index=key_index,
        key_matrix=K,
        equalities=(norm,),
    )


def _summed(problem: MomentProblem, alpha: Monomial, gamma: Monomial, sign: float = 1.0) -> list[tuple[int, float]]:
    return [(problem.variable(b, alpha, gamma), sign) for b in range(1, BOB_OUTCOMES + 1)]


def causal_equalities(problem: MomentProblem) -> list[Equality]:
    """The source-independence equalities, before deduplication.

    ``sum_b d^b[alpha, c_i] = sum_b d^b[alpha, C_i]`` for every alpha in the
    Alice product set and every ``i``, and
    ``sum_b d^b[I, c_i C_j] = sum_b d^b[I, c_i c_j]`` for every ``i, j``.
    """
    n = problem.scenario.n
    I_A = identity(ALICE)
    out = []
    for alpha in problem.alice_set.products():
        for i in range(1, n + 1):
            scal = Monomial(CHARLIE, (), (i,))
            proj = Monomial(CHARLIE, (i,))
            out.append(Equality(
                tuple(_summed(problem, alpha, scal) + _summed(problem, alpha, proj, -1.0)),
                0.0,
                f"causal[{alpha}, c{i}]",
            ))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            mixed = Monomial(CHARLIE, (j,), (i,))
            pure = Monomial(CHARLIE, (), tuple(sorted((i, j))))
            out.append(Equality(
                tuple(_summed(problem, I_A, mixed) + _summed(problem, I_A, pure, -1.0)),
                0.0,
                f"causal[c{i}, C{j}]",
            ))
    return out


def apply_causal_constraints(problem: MomentProblem) -> MomentProblem:
    if not problem.scenario.causally_independent:
        raise StructureError("scenario does not impose causal independence")
    if not any(g.scalars for g in problem.charlie_set):
        raise StructureError("Charlie set was built without scalar symbols")
    if problem.causal_applied:
        return problem
    eqs = _dedupe(problem.equalities + tuple(causal_equalities(problem)))
    return replace(problem, equalities=eqs, causal_applied=True)


def partial_transpose_map(problem: MomentProblem) -> np.ndarray:
    """Flat index permutation of the Alice partial transpose.

    ``(X^{T_A}).ravel() == X.ravel()[perm]``; entry ``((a1, g1), (a2, g2))``
    is taken from ``((a2, g1), (a1, g2))``.
    """
    na, nc = len(problem.alice_set), len(problem.charlie_set)
    dim = na * nc
    a1, g1, a2, g2 = np.meshgrid(np.arange(na), np.arange(nc), np.arange(na), np.arange(nc), indexing="ij")
    src_row = a2 * nc + g1
    src_col = a1 * nc + g2
    return (src_row * dim + src_col).ravel()


def objective_terms(problem: MomentProblem, E: CoefficientMatrix) -> dict[int, float]:
    """Sparse form of ``F`` with ``S^b_xz = 4 d[A_x, C_z] - 2 d[A_x, I] - 2 d[I, C_z] + d[I, I]``."""
    sc = problem.scenario
    E.check_scenario(sc)
    I_A, I_C = identity(ALICE), identity(CHARLIE)
    terms: dict[int, float] = {}

    def add(k, v):
        terms[k] = terms.get(k, 0.0) + v

    for x in range(1, sc.m + 1):
        Ax = Monomial(ALICE, (x,))
        for z in range(1, sc.n + 1):
            e = float(E.entries[x - 1, z - 1])
            if e == 0.0:
                continue
            Cz = Monomial(CHARLIE, (z,))
            for b in range(1, BOB_OUTCOMES + 1):
                w = sign_factor(b, x) * e
                add(problem.variable(b, Ax, Cz), 4 * w)
                add(problem.variable(b, Ax, I_C), -2 * w)
                add(problem.variable(b, I_A, Cz), -2 * w)
                add(problem.variable(b, I_A, I_C), w)
    return {k: v for k, v in terms.items() if v != 0.0}


def assemble_objective(problem: MomentProblem, E: CoefficientMatrix) -> MomentProblem:
    return replace(problem, objective=objective_terms(problem, E))


def theory_equalities(problem: MomentProblem) -> list[Equality]:
    """Real-theory symmetry ``(sum_b Gamma^b)^{T_A} = sum_b Gamma^b``, deduplicated."""
    K = problem.key_matrix
    perm = partial_transpose_map(problem)
    flat = K.ravel()
    pairs = set()
    for k1, k2 in zip(flat.tolist(), flat[perm].tolist()):
        if k1 != k2:
            pairs.add((min(k1, k2), max(k1, k2)))
    nk = problem.n_keys
    out = []
    for k1, k2 in sorted(pairs):
        coeffs = tuple((b * nk + k1, 1.0) for b in range(BOB_OUTCOMES)) + tuple(
            (b * nk + k2, -1.0) for b in range(BOB_OUTCOMES)
        )
        out.append(Equality(coeffs, 0.0, f"real[{k1}, {k2}]"))
    return out


def prepare(scenario: Scenario, E: CoefficientMatrix | None = None) -> MomentProblem:
    """Structure, causal equalities when demanded, and the objective if ``E`` is given."""
    problem = build_moment_structure(scenario)
    if scenario.causally_independent:
        problem = apply_causal_constraints(problem)
    if E is not None:
        problem = assemble_objective(problem, E)
    return problem


def symmetry_group(E: CoefficientMatrix, max_elements: int = 5000) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Setting relabelings ``(sigma, tau)`` with ``E[sigma[x], tau[z]] == E[x, z]``.

    Alice's relabeling ``sigma`` is applied to Bob's outcomes ``1..3`` too,
    which leaves ``g(b, x)`` unchanged, so the whole moment problem and its
    objective are invariant. The identity is included. Returns only the
    identity when the search space exceeds ``max_elements``.
    """
    m, n = E.shape
    ident = (tuple(range(m)), tuple(range(n)))
    if factorial(m) * factorial(n) > max_elements:
        return [ident]
    e = E.entries
    scale = max(1.0, float(np.max(np.abs(e))))
    out = []
    for sx in permutations(range(m)):
        rows = e[list(sx)]
        for sz in permutations(range(n)):
            if np.allclose(rows[:, list(sz)], e, rtol=0.0, atol=1e-12 * scale):
                out.append((sx, sz))
    return out


def _relabel(mono: Monomial, perm: tuple[int, ...]) -> Monomial:
    return Monomial(mono.side, tuple(perm[i - 1] + 1 for i in mono.word),
                    tuple(sorted(perm[i - 1] + 1 for i in mono.scalars)))


def symmetry_equalities(problem: MomentProblem, group) -> list[Equality]:
    """``d^b[alpha, gamma] == d^{pi b}[sigma alpha, tau gamma]`` for every group element.

    Averaging an optimal point over the group keeps it feasible and optimal,
    so these equalities do not change the optimum.
    """
    out = []
    nk = problem.n_keys
    for sx, sz in group:
        if sx == tuple(range(len(sx))) and sz == tuple(range(len(sz))):
            continue
        bob = [sx[b] if b < len(sx) else b for b in range(BOB_OUTCOMES)]
        if sorted(bob) != list(range(BOB_OUTCOMES)):
            raise StructureError("Alice relabeling does not induce a Bob relabeling")
        target = np.empty(nk, dtype=np.int64)
        for k, (alpha, gamma) in enumerate(problem.keys):
            target[k] = problem.key_index[canonical_key(_relabel(alpha, sx), _relabel(gamma, sz))]
        for b in range(BOB_OUTCOMES):
            for k in range(nk):
                v1, v2 = b * nk + k, bob[b] * nk + target[k]
                if v1 != v2:
                    out.append(Equality(((v1, 1.0), (v2, -1.0)), 0.0, "symmetry"))
    return out


def to_conic_program(problem: MomentProblem, theory: Theory, symmetry=None):
    """Standard-form conic program: one PSD block per Bob outcome, plus the PPT block for Complex.

    ``symmetry`` is an optional list of setting relabelings (see
    :func:`symmetry_group`) imposed as extra equalities.
    """
    from .conic import ConicProgram, PSDBlock

    theory = Theory(theory)
    dim = problem.block_dim
    nk = problem.n_keys
    iu, ju = np.triu_indices(dim)
    tri_keys = problem.key_matrix[iu, ju]
    ntri = len(iu)
    blocks = []
    for b in range(BOB_OUTCOMES):
        coeffs = sparse.csr_matrix(
            (np.ones(ntri), (np.arange(ntri), b * nk + tri_keys)), shape=(ntri, problem.n_vars)
        )
        blocks.append(PSDBlock(dim, coeffs, np.zeros(ntri), f"Gamma^{b + 1}"))
    equalities = list(problem.equalities)
    if theory is Theory.COMPLEX:
        perm = partial_transpose_map(problem)
        pt_keys = problem.key_matrix.ravel()[perm].reshape(dim, dim)[iu, ju]
        rows = np.repeat(np.arange(ntri), BOB_OUTCOMES)
        cols = (pt_keys[:, None] + nk * np.arange(BOB_OUTCOMES)[None, :]).ravel()
        coeffs = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(ntri, problem.n_vars))
        blocks.append(PSDBlock(dim, coeffs, np.zeros(ntri), "PPT"))
    else:
        equalities.extend(theory_equalities(problem))
    if symmetry:
        equalities.extend(symmetry_equalities(problem, symmetry))
    equalities = _dedupe(equalities)
    tmp = replace(problem, equalities=equalities)
    A, rhs = tmp.equality_matrix()
    return ConicProgram(
        n_vars=problem.n_vars,
        objective=problem.objective_vector(),
        eq_matrix=A,
        eq_rhs=rhs,
        blocks=tuple(blocks),
        name=f"{problem.scenario.label}-{theory.value}",
    )


def pick_backend(problem: MomentProblem) -> str:
    """SDPA: the most accurate backend here at every size tried.

    Clarabel often stops at reduced accuracy on these problems and cannot
    hold degree-2 blocks in memory; SCS is too slow on the real theory.
    """
    return "sdpa"


def solve_bound(problem: MomentProblem, E: CoefficientMatrix | None, theory: Theory,
                backend: str = "auto", symmetrize: bool = True, **solver_options) -> BoundResult:
    """Upper bound on ``F`` under the given theory.

    Parameters
    ----------
    problem : MomentProblem
        Causal constraints are added here when the scenario asks for them.
    E : CoefficientMatrix or None
        May be omitted when ``problem`` already carries its objective.
    backend : str
        ``"auto"`` picks by block size, see :func:`pick_backend`.
    symmetrize : bool
        Impose the relabeling symmetries of ``E``; exact, and it shrinks
        the problem handed to the solver.
    """
    from .conic import solve

    theory = Theory(theory)
    sc = problem.scenario
    if sc.causally_independent and not problem.causal_applied:
        problem = apply_causal_constraints(problem)
    if E is not None:
        problem = assemble_objective(problem, E)
    if not problem.objective:
        return BoundResult(0.0, theory, SolverStatus.OPTIMAL, 0.0)
    group = None
    if symmetrize and E is not None:
        group = symmetry_group(E)
    program = to_conic_program(problem, theory, symmetry=group)
    if backend == "auto":
        backend = pick_backend(problem)
    sol = solve(program, backend=backend, **solver_options)
    if sol.status is SolverStatus.INFEASIBLE:
        log.error("moment problem %s reported infeasible; this indicates a construction bug", program.name)
    return BoundResult(sol.value, theory, sol.status, sol.gap)
