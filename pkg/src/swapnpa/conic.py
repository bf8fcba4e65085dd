"""Standard-form conic programs with PSD blocks and linear equalities.

The program is::

    maximize    c . y
    subject to  eq_matrix @ y == eq_rhs
                const_j + sum_k y_k G_jk  is PSD   for every block j

Each block stores the upper triangle of its matrices in row-major order
(``numpy.triu_indices``), one row per triangle entry and one column per
variable. Solver backends are wrapped behind :func:`solve`.

Programs keep their equalities explicit. Backends that want an
equality-free problem (SDPA) get one from :func:`eliminate_equalities`,
and the solution is mapped back to the original variables.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .scenario import SolverStatus

log = logging.getLogger(__name__)

DEFAULT_TOLERANCES = {"feas": 1e-8, "gap": 1e-8}
# SDPA stalls around 1e-7 relative gap in double precision
BACKEND_TOLERANCES = {"sdpa": {"feas": 1e-7, "gap": 1e-7}}


@dataclass(frozen=True, eq=False)
class PSDBlock:
    """``const + sum_k y_k G_k`` stored as upper-triangle rows."""

    dim: int
    coeffs: sparse.csr_matrix
    const: np.ndarray
    name: str = ""

    def __post_init__(self):
        ntri = self.dim * (self.dim + 1) // 2
        if self.coeffs.shape[0] != ntri or len(self.const) != ntri:
            raise ValueError(f"block {self.name!r}: expected {ntri} triangle rows")

    def matrix(self, y: np.ndarray) -> np.ndarray:
        """Dense symmetric matrix of the block at the point ``y``."""
        tri = self.coeffs @ y + self.const
        out = np.zeros((self.dim, self.dim))
        iu = np.triu_indices(self.dim)
        out[iu] = tri
        out.T[iu] = tri
        return out

    def coefficient_matrix(self, k: int) -> np.ndarray:
        """Dense symmetric matrix multiplying variable ``k``."""
        col = np.asarray(self.coeffs[:, k].todense()).ravel()
        out = np.zeros((self.dim, self.dim))
        iu = np.triu_indices(self.dim)
        out[iu] = col
        out.T[iu] = col
        return out


@dataclass(frozen=True, eq=False)
class ConicProgram:
    n_vars: int
    objective: np.ndarray
    eq_matrix: sparse.csr_matrix
    eq_rhs: np.ndarray
    blocks: tuple[PSDBlock, ...] = ()
    name: str = ""

    def __post_init__(self):
        if len(self.objective) != self.n_vars:
            raise ValueError("objective length does not match the variable count")
        if self.eq_matrix.shape != (len(self.eq_rhs), self.n_vars):
            raise ValueError("equality matrix shape does not match")
        for blk in self.blocks:
            if blk.coeffs.shape[1] != self.n_vars:
                raise ValueError(f"block {blk.name!r} references {blk.coeffs.shape[1]} variables")

    @property
    def n_equalities(self) -> int:
        return self.eq_matrix.shape[0]

    @property
    def block_dims(self) -> tuple[int, ...]:
        return tuple(blk.dim for blk in self.blocks)

    def equality_residuals(self, y: np.ndarray) -> np.ndarray:
        return self.eq_matrix @ y - self.eq_rhs

    def min_eigenvalues(self, y: np.ndarray) -> np.ndarray:
        """Smallest eigenvalue of every block at ``y``."""
        return np.array([np.linalg.eigvalsh(blk.matrix(y))[0] for blk in self.blocks])


class InconsistentEqualities(ValueError):
    """The equality system has no solution."""


@dataclass(frozen=True, eq=False)
class Reduction:
    """Equality-free program over ``z`` with ``y = lift @ z + shift``."""

    program: ConicProgram
    lift: sparse.csr_matrix
    shift: np.ndarray
    offset: float

    def expand(self, z: np.ndarray) -> np.ndarray:
        return self.lift @ z + self.shift


def eliminate_equalities(program: ConicProgram, tol: float = 1e-12) -> Reduction:
    """Substitute out one pivot variable per independent equality.

    Rows are processed in order; within a row the pivot is the variable with
    the largest coefficient magnitude, ties going to the highest index.
    Substitutions are kept fully resolved, so the result is exact up to
    floating-point rounding in the pivots.
    """
    A = program.eq_matrix.tocsr()
    n = program.n_vars
    subs: dict[int, tuple[dict[int, float], float]] = {}
    users: dict[int, set[int]] = {}
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        row: dict[int, float] = {}
        const = float(program.eq_rhs[r])
        for j, a in zip(A.indices[lo:hi], A.data[lo:hi]):
            if j in subs:
                expr, c = subs[j]
                const -= a * c
                for k, v in expr.items():
                    row[k] = row.get(k, 0.0) + a * v
            else:
                row[j] = row.get(j, 0.0) + a
        row = {k: v for k, v in row.items() if abs(v) > tol}
        if not row:
            if abs(const) > 1e-9:
                raise InconsistentEqualities(f"equality {r} reduces to 0 == {const:g}")
            continue
        big = max(abs(v) for v in row.values())
        p = max(k for k, v in row.items() if abs(v) >= 0.5 * big)
        ap = row.pop(p)
        expr = {k: -v / ap for k, v in row.items()}
        c = const / ap
        # resolve earlier substitutions that mention p
        for q in users.pop(p, ()):
            qexpr, qc = subs[q]
            coef = qexpr.pop(p)
            for k, v in expr.items():
                nv = qexpr.get(k, 0.0) + coef * v
                if abs(nv) > tol:
                    qexpr[k] = nv
                else:
                    qexpr.pop(k, None)
                    users.get(k, set()).discard(q)
                    continue
                users.setdefault(k, set()).add(q)
            subs[q] = (qexpr, qc + coef * c)
        subs[p] = (expr, c)
        for k in expr:
            users.setdefault(k, set()).add(p)
    free = [j for j in range(n) if j not in subs]
    col = {j: i for i, j in enumerate(free)}
    rows, cols, vals = [], [], []
    shift = np.zeros(n)
    for j in free:
        rows.append(j)
        cols.append(col[j])
        vals.append(1.0)
    for p, (expr, c) in subs.items():
        shift[p] = c
        for k, v in expr.items():
            rows.append(p)
            cols.append(col[k])
            vals.append(v)
    lift = sparse.csr_matrix((vals, (rows, cols)), shape=(n, len(free)))
    blocks = tuple(
        PSDBlock(blk.dim, (blk.coeffs @ lift).tocsr(), blk.const + blk.coeffs @ shift, blk.name)
        for blk in program.blocks
    )
    reduced = ConicProgram(
        n_vars=len(free),
        objective=lift.T @ program.objective,
        eq_matrix=sparse.csr_matrix((0, len(free))),
        eq_rhs=np.zeros(0),
        blocks=blocks,
        name=program.name,
    )
    return Reduction(reduced, lift, shift, float(program.objective @ shift))


@dataclass
class Solution:
    value: float
    status: SolverStatus
    gap: float
    y: np.ndarray | None = None
    seconds: float = 0.0
    info: dict = field(default_factory=dict)


def _svec_scale(dim: int) -> np.ndarray:
    iu, ju = np.triu_indices(dim)
    return np.where(iu == ju, 1.0, np.sqrt(2.0))


def _upper_colmajor_order(dim: int) -> np.ndarray:
    """Positions of the upper-triangle column-major entries in row-major triangle storage."""
    pos = np.empty((dim, dim), dtype=np.int64)
    iu, ju = np.triu_indices(dim)
    pos[iu, ju] = np.arange(len(iu))
    jj, ii = np.tril_indices(dim)  # column j outer, row i <= j inner
    return pos[ii, jj]


def _stack_cones(program: ConicProgram, column_major_upper: bool = False):
    """``A y + s = b`` rows with equalities first, then each PSD block in svec form.

    Row-major upper storage coincides with SCS's lower column-major svec;
    clarabel wants upper column-major, selected by ``column_major_upper``.
    """
    A_rows = [program.eq_matrix]
    b_rows = [program.eq_rhs]
    for blk in program.blocks:
        scale = _svec_scale(blk.dim)
        coeffs, const = blk.coeffs, blk.const
        if column_major_upper:
            order = _upper_colmajor_order(blk.dim)
            coeffs, const, scale = coeffs[order], const[order], scale[order]
        A_rows.append(-sparse.diags(scale) @ coeffs)
        b_rows.append(scale * const)
    A = sparse.vstack(A_rows, format="csc")
    b = np.concatenate(b_rows) if b_rows else np.zeros(0)
    return A, b


def _solve_clarabel(program: ConicProgram, tol: dict, max_iter: int, verbose: bool) -> Solution:
    import clarabel

    A, b = _stack_cones(program, column_major_upper=True)
    n = program.n_vars
    P = sparse.csc_matrix((n, n))
    cones = []
    if program.n_equalities:
        cones.append(clarabel.ZeroConeT(program.n_equalities))
    cones.extend(clarabel.PSDTriangleConeT(blk.dim) for blk in program.blocks)
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_feas = tol["feas"]
    settings.tol_gap_abs = tol["gap"]
    settings.tol_gap_rel = tol["gap"]
    settings.max_iter = max_iter
    solver = clarabel.DefaultSolver(P, -program.objective, A, b, cones, settings)
    res = solver.solve()
    status = {
        "Solved": SolverStatus.OPTIMAL,
        "AlmostSolved": SolverStatus.NEAR_OPTIMAL,
        "PrimalInfeasible": SolverStatus.INFEASIBLE,
        "AlmostPrimalInfeasible": SolverStatus.INFEASIBLE,
        "DualInfeasible": SolverStatus.UNBOUNDED,
        "AlmostDualInfeasible": SolverStatus.UNBOUNDED,
    }.get(str(res.status), SolverStatus.NUMERICAL_TROUBLE)
    y = np.array(res.x)
    value = -res.obj_val if status in (SolverStatus.OPTIMAL, SolverStatus.NEAR_OPTIMAL) else float("nan")
    gap = abs(res.obj_val - res.obj_val_dual)
    return Solution(value, status, gap, y, res.solve_time, {"iterations": res.iterations, "raw_status": str(res.status)})


def _solve_scs(program: ConicProgram, tol: dict, max_iter: int, verbose: bool) -> Solution:
    import scs

    A, b = _stack_cones(program)
    data = {"A": A, "b": b, "c": -program.objective}
    cone = {"z": program.n_equalities, "s": [blk.dim for blk in program.blocks]}
    solver = scs.SCS(
        data,
        cone,
        eps_abs=tol["feas"],
        eps_rel=tol["gap"],
        max_iters=max_iter,
        verbose=verbose,
        acceleration_lookback=10,
    )
    sol = solver.solve()
    info = sol["info"]
    raw = info["status"]
    status = {
        "solved": SolverStatus.OPTIMAL,
        "solved (inaccurate - reached max_iters)": SolverStatus.NEAR_OPTIMAL,
        "solved_inaccurate": SolverStatus.NEAR_OPTIMAL,
        "infeasible": SolverStatus.INFEASIBLE,
        "infeasible_inaccurate": SolverStatus.INFEASIBLE,
        "unbounded": SolverStatus.UNBOUNDED,
        "unbounded_inaccurate": SolverStatus.UNBOUNDED,
    }.get(raw, SolverStatus.NUMERICAL_TROUBLE)
    value = -info["pobj"] if status in (SolverStatus.OPTIMAL, SolverStatus.NEAR_OPTIMAL) else float("nan")
    return Solution(value, status, abs(info["gap"]), np.array(sol["x"]), info["solve_time"] / 1e3,
                    {"iterations": info["iter"], "raw_status": raw})


def _solve_sdpa(program: ConicProgram, tol: dict, max_iter: int, verbose: bool) -> Solution:
    """SDPA on the equality-free program, posed directly in its dual form.

    With ``x`` in the PSD cone SDPA minimizes ``c.x`` s.t. ``A x = b``; its
    dual maximizes ``b.y`` s.t. ``c - A^T y`` is PSD, which is our program
    with ``c = vec(const)`` and ``A^T = -vec(G)``.
    """
    from sdpap.param import param
    from sdpap.sdpacall import sdpacall
    from sdpap.symcone import SymCone

    if program.n_equalities:
        raise ValueError("the SDPA backend needs an equality-free program")
    cols, consts = [], []
    for blk in program.blocks:
        d = blk.dim
        pos = np.empty((d, d), dtype=np.int64)
        iu, ju = np.triu_indices(d)
        pos[iu, ju] = np.arange(len(iu))
        pos[ju, iu] = np.arange(len(iu))
        full = pos.T.ravel()
        cols.append(blk.coeffs[full])
        consts.append(blk.const[full])
    A = -sparse.vstack(cols).T.tocsr()
    c = sparse.csc_matrix(np.concatenate(consts)).T
    b = sparse.csc_matrix(program.objective).T
    option = param({
        "print": "display" if verbose else "no",
        "epsilonStar": tol["gap"],
        "epsilonDash": tol["feas"],
        "maxIteration": max_iter,
    })
    _, y, _, info = sdpacall.solve_sdpa(A, b, c, SymCone(s=program.block_dims), option)
    phase = info["phasevalue"]
    p_obj, d_obj = info["primalObj"], info["dualObj"]
    gap = abs(p_obj - d_obj)
    rel = gap / max(1.0, (abs(p_obj) + abs(d_obj)) / 2)
    if phase == "pdOPT" or (phase == "pdFEAS" and rel <= 10 * tol["gap"]):
        status = SolverStatus.OPTIMAL
    elif phase in ("pdFEAS", "dFEAS"):
        status = SolverStatus.NEAR_OPTIMAL
    elif phase in ("dUNBD", "pINF_dFEAS"):
        status = SolverStatus.UNBOUNDED
    elif phase in ("pdINF", "pFEAS_dINF", "pUNBD"):
        status = SolverStatus.INFEASIBLE
    else:
        status = SolverStatus.NUMERICAL_TROUBLE
    # SDPA's primal objective is certified by a PSD dual matrix, so it is the
    # upper end of the bracket; y itself attains the lower end d_obj
    value = p_obj if status in (SolverStatus.OPTIMAL, SolverStatus.NEAR_OPTIMAL) else float("nan")
    return Solution(value, status, gap, np.asarray(y.todense()).ravel(), info["sdpaTime"],
                    {"iterations": info["iteration"], "raw_status": phase})


BACKENDS = {"clarabel": _solve_clarabel, "scs": _solve_scs, "sdpa": _solve_sdpa}
NEEDS_REDUCTION = {"sdpa"}
DEFAULT_MAX_ITER = {"clarabel": 200, "scs": 200_000, "sdpa": 100}


def solve(program: ConicProgram, tolerances: dict | None = None, backend: str = "clarabel",
          max_iter: int | None = None, verbose: bool = False, presolve: bool | None = None) -> Solution:
    """Maximize the program's objective.

    Parameters
    ----------
    tolerances : dict, optional
        ``{"feas": ..., "gap": ...}``; defaults to 1e-8 for both (1e-7 for SDPA).
    backend : {"clarabel", "scs", "sdpa"}
        Clarabel is accurate but stores a dense scaling per PSD block, so it
        only suits small blocks. SCS is first-order. SDPA is interior-point
        with a dense Schur complement in the number of free variables.
    presolve : bool, optional
        Eliminate equalities before calling the backend (default). SDPA
        cannot run without it.

    Returns
    -------
    Solution
        ``y`` is expressed in the original variables.
    """
    tol = dict(BACKEND_TOLERANCES.get(backend, DEFAULT_TOLERANCES))
    if tolerances:
        tol.update(tolerances)
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {sorted(BACKENDS)}")
    if not np.any(program.objective):
        return Solution(0.0, SolverStatus.OPTIMAL, 0.0, np.zeros(program.n_vars))
    if max_iter is None:
        max_iter = DEFAULT_MAX_ITER[backend]
    if presolve is None or backend in NEEDS_REDUCTION:
        presolve = presolve is not False or backend in NEEDS_REDUCTION
    t0 = time.perf_counter()
    reduction = None
    target = program
    if presolve and program.n_equalities:
        try:
            reduction = eliminate_equalities(program)
        except InconsistentEqualities as exc:
            log.error("%s: %s", program.name, exc)
            return Solution(float("nan"), SolverStatus.INFEASIBLE, float("inf"))
        target = reduction.program
        log.info("%s: %d variables reduced to %d", program.name, program.n_vars, target.n_vars)
    if not target.blocks and not np.any(target.objective):
        sol = Solution(0.0, SolverStatus.OPTIMAL, 0.0, np.zeros(target.n_vars))
    else:
        sol = BACKENDS[backend](target, tol, max_iter, verbose)
    if reduction is not None:
        sol.value += reduction.offset
        if sol.y is not None:
            sol.y = reduction.expand(sol.y)
    sol.seconds = time.perf_counter() - t0
    log.info("%s via %s: %s value=%.8f gap=%.2e in %.1fs", program.name, backend, sol.status.value,
             sol.value, sol.gap, sol.seconds)
    return sol


# -- SDPA sparse format ------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(program: ConicProgram, destination) -> str:
    """Write the program in SDPA sparse format and return the text.

    SDPA minimizes ``c.x`` subject to ``sum_k x_k F_k - F_0`` PSD, so the
    objective is negated and ``F_0 = -const``. Equalities become a trailing
    diagonal block holding the pair ``a.y - r >= 0`` and ``r - a.y >= 0`` for
    every row. Entries are sorted, so identical programs give identical
    bytes. ``destination`` may be a path, an open text file, or ``None``.
    """
    n_eq = program.n_equalities
    sizes = [str(blk.dim) for blk in program.blocks]
    if n_eq:
        sizes.append(str(-2 * n_eq))
    lines = [str(program.n_vars), str(len(sizes)), " ".join(sizes),
             " ".join(_fmt(-v) for v in program.objective)]
    entries = []
    for bi, blk in enumerate(program.blocks, start=1):
        iu, ju = np.triu_indices(blk.dim)
        for t in np.flatnonzero(blk.const):
            entries.append((0, bi, iu[t] + 1, ju[t] + 1, -blk.const[t]))
        coo = blk.coeffs.tocoo()
        for t, k, v in zip(coo.row, coo.col, coo.data):
            if v != 0:
                entries.append((k + 1, bi, iu[t] + 1, ju[t] + 1, v))
    if n_eq:
        bi = len(program.blocks) + 1
        for r in np.flatnonzero(program.eq_rhs):
            r_val = program.eq_rhs[r]
            entries.append((0, bi, 2 * r + 1, 2 * r + 1, r_val))
            entries.append((0, bi, 2 * r + 2, 2 * r + 2, -r_val))
        coo = program.eq_matrix.tocoo()
        for r, k, v in zip(coo.row, coo.col, coo.data):
            if v != 0:
                entries.append((k + 1, bi, 2 * r + 1, 2 * r + 1, v))
                entries.append((k + 1, bi, 2 * r + 2, 2 * r + 2, -v))
    entries.sort(key=lambda e: e[:4])
    lines.extend(f"{k} {b} {i} {j} {_fmt(v)}" for k, b, i, j, v in entries)
    text = "\n".join(lines) + "\n"
    if destination is not None:
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            with open(destination, "w", encoding="ascii") as fh:
                fh.write(text)
    return text


class SDPAFormatError(ValueError):
    pass


def parse_sdpa(source) -> ConicProgram:
    """Read SDPA sparse text back into a :class:`ConicProgram`.

    Diagonal blocks whose entries come in exactly opposite consecutive pairs
    are read as equalities; any other diagonal entry becomes a 1x1 block.
    ``source`` is a path, a file object or the text itself.
    """
    if hasattr(source, "read"):
        text = source.read()
    elif "\n" in str(source):
        text = str(source)
    else:
        with open(source, encoding="ascii") as fh:
            text = fh.read()
    raw = [ln for ln in text.splitlines() if not ln.startswith(("*", '"'))]
    clean = lambda ln: ln.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ")
    try:
        n_vars = int(clean(raw[0]).split()[0])
        n_blocks = int(clean(raw[1]).split()[0])
        sizes = [int(float(t)) for t in clean(raw[2]).split()][:n_blocks]
        c = np.array([float(t) for t in clean(raw[3]).split()][:n_vars])
    except (IndexError, ValueError) as exc:
        raise SDPAFormatError(f"bad SDPA header: {exc}") from exc
    if len(sizes) != n_blocks or len(c) != n_vars:
        raise SDPAFormatError("header counts do not match")
    per_block: list[dict] = [dict() for _ in sizes]
    for ln in raw[4:]:
        parts = clean(ln).split()
        if not parts:
            continue
        if len(parts) != 5:
            raise SDPAFormatError(f"bad entry line {ln!r}")
        k, b, i, j = (int(t) for t in parts[:4])
        v = float(parts[4])
        if not (0 <= k <= n_vars and 1 <= b <= n_blocks):
            raise SDPAFormatError(f"entry out of range: {ln!r}")
        if i > j:
            i, j = j, i
        key = (i - 1, j - 1, k)
        per_block[b - 1][key] = per_block[b - 1].get(key, 0.0) + v
    blocks, eq_rows, eq_rhs = [], [], []
    for size, entries in zip(sizes, per_block):
        if size > 0:
            ntri = size * (size + 1) // 2
            pos = np.empty((size, size), dtype=np.int64)
            iu, ju = np.triu_indices(size)
            pos[iu, ju] = np.arange(ntri)
            const = np.zeros(ntri)
            rows, cols, vals = [], [], []
            for (i, j, k), v in entries.items():
                if k == 0:
                    const[pos[i, j]] = -v
                else:
                    rows.append(pos[i, j])
                    cols.append(k - 1)
                    vals.append(v)
            coeffs = sparse.csr_matrix((vals, (rows, cols)), shape=(ntri, n_vars))
            blocks.append(PSDBlock(size, coeffs, const, f"block{len(blocks) + 1}"))
            continue
        size = -size
        diag: list[dict[int, float]] = [dict() for _ in range(size)]
        for (i, j, k), v in entries.items():
            if i != j:
                raise SDPAFormatError("off-diagonal entry in a diagonal block")
            diag[i][k] = v
        t = 0
        while t < size:
            if t + 1 < size and diag[t] and diag[t] == {k: -v for k, v in diag[t + 1].items()}:
                row = {k: v for k, v in diag[t].items() if k != 0}
                eq_rows.append(row)
                eq_rhs.append(diag[t].get(0, 0.0))
                t += 2
                continue
            row = diag[t]
            coeffs = sparse.csr_matrix(
                ([v for k, v in row.items() if k], ([0] * sum(1 for k in row if k), [k - 1 for k in row if k])),
                shape=(1, n_vars),
            )
            blocks.append(PSDBlock(1, coeffs, np.array([-row.get(0, 0.0)]), f"block{len(blocks) + 1}"))
            t += 1
    rows = [r for r, row in enumerate(eq_rows) for _ in row]
    cols = [k - 1 for row in eq_rows for k in row]
    vals = [v for row in eq_rows for v in row.values()]
    eq = sparse.csr_matrix((vals, (rows, cols)), shape=(len(eq_rows), n_vars))
    return ConicProgram(n_vars, -c, eq, np.array(eq_rhs, dtype=float), tuple(blocks), "sdpa")
