"""Sequential model-based optimization of the ratio R(E) = F_r / F_q.

A Gaussian process with a Matern-5/2 kernel models R over the box of
coefficient matrices, and expected improvement picks the next matrix. Runs
are deterministic for a given seed: every random draw comes from a
generator seeded by ``(seed, trial index)``.
"""
from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import optimize, stats
from scipy.stats import qmc

from .scenario import CoefficientMatrix, DegenerateFunctional, Scenario, Theory, ratio

log = logging.getLogger(__name__)

FAILURE_PENALTY = 1.0


class AllTrialsFailed(RuntimeError):
    """Every trial of a run failed; the history is attached."""

    def __init__(self, message: str, history: "History"):
        super().__init__(message)
        self.history = history


class ObjectiveFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchSpace:
    """Box of ``m x n`` coefficient matrices, flattened row-major."""

    m: int
    n: int
    lower: float | tuple = -1.0
    upper: float | tuple = 1.0

    def __post_init__(self):
        lo, hi = self.bounds()
        if np.any(lo >= hi):
            raise ValueError("every lower bound must lie below its upper bound")

    @property
    def dims(self) -> int:
        return self.m * self.n

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.m * self.n,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.m * self.n,)).copy()
        return lo, hi

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        lo, hi = self.bounds()
        return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Rescale to max-abs 1 when the result stays inside the box.

        R is invariant under positive scaling, so this only removes the
        flat direction along rays.
        """
        peak = np.max(np.abs(x))
        if peak == 0:
            return np.array(x, dtype=float)
        y = x / peak
        return y if self.contains(y) else np.array(x, dtype=float)

    def to_matrix(self, x: np.ndarray) -> CoefficientMatrix:
        return CoefficientMatrix(np.asarray(x, dtype=float).reshape(self.m, self.n))


@dataclass
class Trial:
    index: int
    E: list
    R: Optional[float]
    failure: Optional[str] = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.failure is None

    @property
    def score(self) -> float:
        """Value fed to the surrogate: R, or the penalty for failures."""
        return self.R if self.ok else FAILURE_PENALTY

    def to_json(self) -> str:
        return json.dumps({"index": self.index, "E": self.E, "R": self.R, "failure": self.failure,
                           "seconds": round(self.seconds, 6)}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Trial":
        doc = json.loads(line)
        return cls(doc["index"], doc["E"], doc["R"], doc.get("failure"), doc.get("seconds", 0.0))


@dataclass
class History:
    """Ordered trials; optionally mirrored to a JSON-lines file."""

    trials: list[Trial] = field(default_factory=list)
    path: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.trials)

    def append(self, trial: Trial) -> None:
        if trial.index != len(self.trials):
            raise ValueError(f"trial index {trial.index} does not continue a history of {len(self.trials)}")
        self.trials.append(trial)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(trial.to_json() + "\n")

    @property
    def incumbent(self) -> Optional[Trial]:
        best = None
        for t in self.trials:
            if t.ok and (best is None or t.R < best.R):
                best = t
        return best

    def incumbent_trace(self) -> list[Optional[float]]:
        """Incumbent R after each trial (``None`` before the first success)."""
        out, best = [], None
        for t in self.trials:
            if t.ok and (best is None or t.R < best):
                best = t.R
            out.append(best)
        return out

    def signature(self) -> list[tuple]:
        """Everything except timings, for determinism checks."""
        return [(t.index, t.E, t.R, t.failure) for t in self.trials]

    @classmethod
    def load(cls, path) -> "History":
        path = Path(path)
        trials = []
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                trials = [Trial.from_json(line) for line in fh if line.strip()]
        for i, t in enumerate(trials):
            if t.index != i:
                raise ValueError(f"{path}: trial {i} is numbered {t.index}")
        return cls(trials, path)


def objective(E: CoefficientMatrix, scenario: Scenario, **solve_options) -> float:
    """``R(E) = F_r / F_q`` from two solves of the same moment problem.

    Raises
    ------
    DegenerateFunctional
        When ``F_q`` vanishes (for example ``E = 0``).
    ObjectiveFailure
        When either solve does not reach an optimal or near-optimal status.
    """
    from .moments import prepare, solve_bound

    E.check_scenario(scenario)
    if not np.any(E.entries):
        raise DegenerateFunctional("all-zero coefficient matrix")
    problem = prepare(scenario, E)
    fq = solve_bound(problem, E, Theory.COMPLEX, **solve_options)
    fr = solve_bound(problem, E, Theory.REAL, **solve_options)
    for res in (fq, fr):
        if not res.solved:
            raise ObjectiveFailure(f"{res.theory.value} solve ended with {res.solver_status.value}")
    return ratio(fr.value, fq.value)


def _expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float, xi: float) -> np.ndarray:
    sigma = np.maximum(sigma, 1e-12)
    z = (best - mu - xi) / sigma
    return (best - mu - xi) * stats.norm.cdf(z) + sigma * stats.norm.pdf(z)


def _fit_surrogate(X: np.ndarray, y: np.ndarray, seed: int):
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.gaussian_process import GaussianProcessRegressor
    from sklearn.gaussian_process.kernels import ConstantKernel, Matern, WhiteKernel

    kernel = ConstantKernel(1.0, (1e-3, 1e3)) * Matern(
        length_scale=np.ones(X.shape[1]), length_scale_bounds=(1e-2, 1e2), nu=2.5
    ) + WhiteKernel(1e-6, (1e-10, 1e-1))
    gp = GaussianProcessRegressor(kernel, normalize_y=True, n_restarts_optimizer=2, random_state=seed)
    with warnings.catch_warnings():
        # hyperparameters at a bound are expected on flat stretches of R
        warnings.simplefilter("ignore", ConvergenceWarning)
        gp.fit(X, y)
    return gp


def propose(history: History, space: SearchSpace, rng: np.random.Generator, xi: float = 0.01,
            n_random_starts: int = 10, n_local_starts: int = 5) -> np.ndarray:
    """Maximize expected improvement by multi-start L-BFGS-B."""
    X = np.array([np.ravel(t.E) for t in history.trials])
    y = np.array([t.score for t in history.trials])
    gp = _fit_surrogate(X, y, int(rng.integers(2**31 - 1)))
    best = float(np.min(y))
    lo, hi = space.bounds()

    def neg_ei(x):
        mu, sd = gp.predict(x[None, :], return_std=True)
        return -float(_expected_improvement(mu, sd, best, xi)[0])

    starts = list(rng.uniform(lo, hi, size=(n_random_starts, space.dims)))
    inc = X[int(np.argmin(y))]
    width = 0.1 * (hi - lo)
    starts += [np.clip(inc + rng.normal(0.0, width), lo, hi) for _ in range(n_local_starts)]
    best_x, best_val = None, np.inf
    for x0 in starts:
        res = optimize.minimize(neg_ei, x0, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                                options={"maxiter": 50})
        if res.fun < best_val:
            best_x, best_val = np.clip(res.x, lo, hi), res.fun
    return best_x


def initial_design(space: SearchSpace, size: int, seed: int) -> np.ndarray:
    """Scrambled Sobol points scaled to the box.

    A power-of-two block is drawn and truncated, so a design is a prefix of
    any larger design with the same seed.
    """
    lo, hi = space.bounds()
    sampler = qmc.Sobol(space.dims, scramble=True, seed=seed)
    points = sampler.random_base2(max(0, int(np.ceil(np.log2(max(size, 1))))))
    return qmc.scale(points[:size], lo, hi)


def smbo_run(space: SearchSpace, scenario: Scenario, budget: int, seed: int,
             history: History | None = None, objective_fn: Callable | None = None,
             n_initial: int | None = None, **solve_options) -> History:
    """Run (or resume) an optimization until ``budget`` trials exist.

    Parameters
    ----------
    history : History, optional
        Existing trials to continue from; its file, if any, receives the
        new trials.
    objective_fn : callable, optional
        ``f(E, scenario) -> R``; defaults to :func:`objective` with
        ``solve_options``.
    n_initial : int, optional
        Size of the space-filling design, ``4 * dims`` by default. A budget
        below it evaluates only the first ``budget`` design points.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    if (space.m, space.n) != (scenario.m, scenario.n):
        raise ValueError("search space and scenario disagree on the matrix shape")
    history = history if history is not None else History()
    if objective_fn is None:
        objective_fn = lambda E, sc: objective(E, sc, **solve_options)  # noqa: E731
    n_init = 4 * space.dims if n_initial is None else n_initial
    design = initial_design(space, n_init, seed)
    while len(history) < budget:
        i = len(history)
        rng = np.random.default_rng([seed, i])
        if i < n_init:
            x = design[i]
        else:
            x = propose(history, space, rng)
        x = space.normalize(x)
        E = space.to_matrix(x)
        t0 = time.perf_counter()
        try:
            R, failure = float(objective_fn(E, scenario)), None
        except (DegenerateFunctional, ObjectiveFailure, ArithmeticError) as exc:
            R, failure = None, f"{type(exc).__name__}: {exc}"
        trial = Trial(i, x.reshape(space.m, space.n).tolist(), R, failure, time.perf_counter() - t0)
        history.append(trial)
        log.info("trial %d: R=%s %s", i, R, failure or "")
    if history.incumbent is None:
        raise AllTrialsFailed(f"all {len(history)} trials failed", history)
    return history


def symmetrize_result(E: CoefficientMatrix) -> CoefficientMatrix:
    """Canonical representative under row/column permutations and scaling.

    The matrix is rescaled to max-abs entry 1 with its first nonzero entry
    (row-major) positive; among all row and column permutations the one
    with the lexicographically smallest row-major encoding wins. The
    encoding lists the sign pattern before the values, so matrices that
    differ only by small noise in the magnitudes land on the same
    arrangement.
    """
    e = np.asarray(E.entries, dtype=float)
    peak = np.max(np.abs(e))
    if peak == 0:
        return CoefficientMatrix(e)
    m, n = e.shape
    best = None
    for rp in permutations(range(m)):
        rows = e[list(rp)]
        for cp in permutations(range(n)):
            cand = rows[:, list(cp)] / peak
            flat = cand.ravel()
            if flat[np.flatnonzero(flat)[0]] < 0:
                cand = -cand
            flat = np.round(cand.ravel(), 12)
            key = (tuple(np.sign(flat)), tuple(flat))
            if best is None or key < best[0]:
                best = (key, cand)
    return CoefficientMatrix(best[1] + 0.0)
