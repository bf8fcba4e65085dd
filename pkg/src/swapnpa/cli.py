"""Command-line entry point: ``swapnpa {bound,evaluate,table,optimize}``.

With ``--json`` a single JSON document goes to standard output; the
human-readable report always goes to standard error.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 degenerate functional.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import presets
from .scenario import (
    CoefficientMatrix,
    DegenerateFunctional,
    DomainError,
    EPS_RATIO,
    Scenario,
    Theory,
    evaluate_F,
    load_config,
    ratio,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DEGENERATE = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class SolverFailure(Exception):
    pass


def _err(msg: str = "") -> None:
    print(msg, file=sys.stderr)


def _parse_shape(text: str) -> tuple[int, int]:
    try:
        m, n = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--scenario expects MxN, got {text!r}") from None
    return m, n


def _parse_matrix(text: str, shape: tuple[int, int] | None) -> CoefficientMatrix:
    """Inline matrix (JSON or ``1,2;3,4``), the word ``zeros``, or a file."""
    text = text.strip()
    if text == "zeros":
        if shape is None:
            shape = (3, 3)
        return CoefficientMatrix(np.zeros(shape))
    path = Path(text)
    if not text.startswith("[") and path.exists():
        doc = json.loads(path.read_text())
        if isinstance(doc, dict):
            if "E" not in doc:
                raise ConfigError(f"{path} has no 'E' entry")
            doc = doc["E"]
        return CoefficientMatrix(doc)
    try:
        if text.startswith("["):
            return CoefficientMatrix(json.loads(text))
        return CoefficientMatrix([[float(v) for v in row.split(",")] for row in text.split(";")])
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read coefficient matrix {text!r}: {exc}") from None


def resolve_config(args) -> tuple[Scenario, CoefficientMatrix | None, str | None]:
    """Scenario, coefficient matrix and preset name from the parsed flags."""
    scenario, E, label = None, None, None
    if getattr(args, "config", None):
        try:
            scenario, E = load_config(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    shape = _parse_shape(args.scenario) if args.scenario else None
    if args.preset:
        try:
            E = presets.preset(args.preset)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
        label = presets.resolve(args.preset)
    if args.E:
        E = _parse_matrix(args.E, shape)
    if shape is None:
        shape = E.shape if E is not None else ((scenario.m, scenario.n) if scenario else (3, 3))
    degree = args.degree if args.degree is not None else (scenario.hierarchy_degree if scenario else 2)
    causal = args.causal if args.causal is not None else (scenario.causally_independent if scenario else True)
    scenario = Scenario(shape[0], shape[1], degree, causal)
    if E is not None:
        E.check_scenario(scenario)
    return scenario, E, label


def _theories(choice: str) -> list[Theory]:
    return [Theory.COMPLEX, Theory.REAL] if choice == "both" else [Theory(choice)]


def _solver_options(args) -> dict:
    opts = {}
    if getattr(args, "backend", None):
        opts["backend"] = args.backend
    if getattr(args, "tol", None):
        opts["tolerances"] = {"feas": args.tol, "gap": args.tol}
    return opts


def compute_bounds(scenario: Scenario, E: CoefficientMatrix, theories, export: str | None = None,
                   **solve_options) -> dict:
    """Solve each theory on one moment problem; adds ``R`` when both are present."""
    from .conic import export_sdpa
    from .moments import prepare, solve_bound, to_conic_program

    if not np.any(E.entries):
        raise DegenerateFunctional("degenerate functional: all-zero coefficient matrix")
    problem = prepare(scenario, E)
    report = {"scenario": [scenario.m, scenario.n], "degree": scenario.hierarchy_degree,
              "causal": scenario.causally_independent, "E": E.tolist(), "statuses": {}, "gaps": {}}
    for theory in theories:
        if export:
            path = Path(export)
            if len(theories) > 1:
                path = path.with_name(f"{path.stem}-{theory.value}{path.suffix}")
            export_sdpa(to_conic_program(problem, theory), path)
            report.setdefault("exported", []).append(str(path))
        res = solve_bound(problem, E, theory, **solve_options)
        key = "F_q" if theory is Theory.COMPLEX else "F_r"
        report[key] = res.value
        report["statuses"][theory.value] = res.solver_status.value
        report["gaps"][theory.value] = res.duality_gap
        if not res.solved:
            raise SolverFailure(f"{theory.value} solve ended with status {res.solver_status.value}")
    if "F_q" in report and report["F_q"] <= EPS_RATIO:
        raise DegenerateFunctional(f"degenerate functional: complex bound {report['F_q']:.3g}")
    if "F_q" in report and "F_r" in report:
        report["R"] = ratio(report["F_r"], report["F_q"])
    return report


def cmd_bound(args) -> dict:
    scenario, E, label = resolve_config(args)
    if E is None:
        raise ConfigError("bound needs --preset, --E or --config with an 'E' entry")
    report = compute_bounds(scenario, E, _theories(args.theory), export=args.export_sdpa,
                            **_solver_options(args))
    if label:
        report["preset"] = label
    _err(f"scenario {scenario.label}, degree {scenario.hierarchy_degree}, "
         f"causal={scenario.causally_independent}")
    for key in ("F_q", "F_r", "R"):
        if key in report:
            _err(f"  {key:4s} = {report[key]:.6f}")
    return report


def cmd_evaluate(args) -> dict:
    from .moments import prepare
    from .quantum import (
        NoiseModel,
        apply_noise,
        compute_probabilities,
        dump_moments,
        standard_setup,
    )
    from .scenario import correlators_from_probabilities

    scenario, E, label = resolve_config(args)
    if E is None:
        raise ConfigError("evaluate needs --preset, --E or --config with an 'E' entry")
    setup = standard_setup(scenario, E)
    noise = NoiseModel(args.vE, args.vI)
    if (args.vE, args.vI) != (1.0, 1.0):
        setup = apply_noise(setup, noise)
    P = compute_probabilities(setup)
    S = correlators_from_probabilities(P)
    F = evaluate_F(E, S)
    resid = P.independence_residuals()
    report = {"scenario": [scenario.m, scenario.n], "E": E.tolist(), "F": F,
              "v_E": args.vE, "v_I": args.vI, "noise_scale": noise.correlator_scale,
              "correlators": {f"{b + 1},{x + 1},{z + 1}": float(S.values[b, x, z])
                              for b in range(S.values.shape[0]) for x in range(scenario.m)
                              for z in range(scenario.n)},
              "independence_residual_max": float(np.max(np.abs(resid)))}
    if label:
        report["preset"] = label
    if args.dump_moments:
        problem = prepare(scenario, E)
        Path(args.dump_moments).write_text(json.dumps(dump_moments(setup, problem), indent=1, sort_keys=True))
        report["moments_file"] = args.dump_moments
    _err(f"{label or 'E'}: F = {F:.6f} (v_E={args.vE}, v_I={args.vI})")
    _err(f"  max independence residual {report['independence_residual_max']:.2e}")
    return report


def cmd_table(args) -> dict:
    rows = []
    opts = _solver_options(args)
    for name in ("paper-33", "paper-34"):
        E = presets.preset(name)
        sc = Scenario(E.shape[0], E.shape[1], args.degree or 2, True)
        rep = compute_bounds(sc, E, [Theory.COMPLEX, Theory.REAL], **opts)
        rows.append({"scenario": sc.label, "R": rep["R"], "reported": presets.REPORTED[name]["R"],
                     "F_q": rep["F_q"], "F_r": rep["F_r"], "causal": True, "recomputed": True})
    for label, R, causal in presets.CITED_RATIOS:
        rows.append({"scenario": label, "R": None, "reported": R, "causal": causal, "recomputed": False})
    _err(f"{'scenario':10s} {'R (this run)':>13s} {'R (reported)':>13s} causal")
    for r in rows:
        got = f"{r['R']:.4f}" if r["R"] is not None else "cited"
        _err(f"{r['scenario']:10s} {got:>13s} {r['reported']:13.4f} {'yes' if r['causal'] else 'no'}")
    return {"degree": args.degree or 2, "rows": rows}


def cmd_optimize(args) -> dict:
    from .smbo import AllTrialsFailed, History, SearchSpace, smbo_run, symmetrize_result

    scenario, _, _ = resolve_config(args)
    space = SearchSpace(scenario.m, scenario.n)
    history = History.load(args.history) if args.history else History()
    start = len(history)
    try:
        history = smbo_run(space, scenario, args.budget, args.seed, history=history, **_solver_options(args))
    except AllTrialsFailed as exc:
        raise SolverFailure(str(exc)) from None
    inc = history.incumbent
    canon = symmetrize_result(CoefficientMatrix(inc.E))
    _err(f"{len(history) - start} new trials, {len(history)} total; incumbent R = {inc.R:.6f} (trial {inc.index})")
    return {"scenario": [scenario.m, scenario.n], "degree": scenario.hierarchy_degree, "budget": args.budget,
            "seed": args.seed, "trials": len(history), "new_trials": len(history) - start,
            "incumbent": {"index": inc.index, "R": inc.R, "E": inc.E}, "canonical_E": canon.tolist(),
            "history": args.history}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="settings as MxN, e.g. 3x4")
    common.add_argument("--preset", help=f"named matrix: {', '.join(presets.names())}")
    common.add_argument("--E", help="matrix file, inline JSON/'1,2;3,4', or 'zeros'")
    common.add_argument("--config", help="JSON config with m, n, hierarchy_degree, causally_independent, E")
    common.add_argument("--degree", type=int, help="hierarchy degree (default 2)")
    common.add_argument("--causal", action=argparse.BooleanOptionalAction, default=None,
                        help="impose source independence (default on)")
    common.add_argument("--json", action="store_true", help="emit one JSON document on stdout")
    common.add_argument("--backend", choices=["auto", "clarabel", "scs", "sdpa"], default=None)
    common.add_argument("--tol", type=float, help="solver feasibility and gap tolerance")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="swapnpa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("bound", parents=[common], help="real and complex upper bounds on F")
    p.add_argument("--theory", choices=["real", "complex", "both"], default="both")
    p.add_argument("--export-sdpa", metavar="PATH")
    p.set_defaults(func=cmd_bound)
    p = sub.add_parser("evaluate", parents=[common], help="F of the explicit qubit strategy")
    p.add_argument("--vE", type=float, default=1.0)
    p.add_argument("--vI", type=float, default=1.0)
    p.add_argument("--dump-moments", metavar="PATH")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("table", parents=[common], help="recompute the comparison table rows")
    p.set_defaults(func=cmd_table)
    p = sub.add_parser("optimize", parents=[common], help="SMBO search over E")
    p.add_argument("--budget", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--history", metavar="PATH", help="JSON-lines history; resumed if it exists")
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        report = args.func(args)
    except DegenerateFunctional as exc:
        msg = str(exc) if "degenerate functional" in str(exc) else f"degenerate functional: {exc}"
        _err(f"error: {msg}")
        code, report = EXIT_DEGENERATE, {"error": msg}
    except SolverFailure as exc:
        _err(f"error: solver failure: {exc}")
        code, report = EXIT_SOLVER, {"error": str(exc)}
    except (ConfigError, DomainError, OSError) as exc:
        _err(f"error: {exc}")
        code, report = EXIT_CONFIG, {"error": str(exc)}
    else:
        code = EXIT_OK
    if args.json:
        print(json.dumps(report, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
