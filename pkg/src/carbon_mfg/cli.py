"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 validation failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Sequence

import numpy as np

from . import io
from .fbode import InnerConvergenceError, contraction_certificate, largest_contracting_horizon
from .major import EquilibriumCheckError, SingularMajorSystemError
from .montecarlo import consistency_checks, validate
from .nash import solve_m4fne, solve_mfg_given_gamma
from .scenario import (
    Scenario,
    ScenarioError,
    TimeGrid,
    connection_preset,
    desk_scenario,
    dump_scenario,
    read_scenario,
    three_region_scenario,
)

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_VALIDATION = 0, 1, 2, 3

log = logging.getLogger("carbon_mfg")


class InputError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def _load(args) -> Scenario:
    try:
        scenario = read_scenario(args.scenario)
    except OSError as exc:
        raise InputError(f"cannot read scenario: {exc}") from exc
    opts: dict[str, Any] = {}
    if getattr(args, "eps", None) is not None:
        opts["eps_outer"] = args.eps
    if getattr(args, "max_iter", None) is not None:
        opts["max_iter_outer"] = args.max_iter
    if getattr(args, "tau_sign", None) is not None:
        opts["tau_sign"] = args.tau_sign
    if opts:
        scenario = scenario.with_options(**opts)
    if getattr(args, "dt", None) is not None:
        scenario = scenario.with_grid(TimeGrid.from_dt(scenario.grid.horizon, args.dt))
    return scenario


def _gamma(args, scenario: Scenario, default_ones: bool = False) -> np.ndarray | None:
    if args.gamma is None:
        return np.ones(scenario.M) if default_ones else None
    gamma = np.asarray(args.gamma, dtype=float)
    if gamma.shape != (scenario.M,):
        raise InputError(f"--gamma needs {scenario.M} values, got {len(gamma)}")
    if np.any(gamma < scenario.options.gamma_floor):
        raise InputError(f"--gamma entries must be >= gamma_floor={scenario.options.gamma_floor}")
    return gamma


# -- commands ----------------------------------------------------------------

def cmd_solve(args) -> int:
    scenario = _load(args)
    out = io.ensure_dir(args.out)
    result = solve_m4fne(scenario)
    io.write_json(os.path.join(out, "result.json"), io.result_to_dict(result))
    io.write_paths_csv(os.path.join(out, "paths.csv"), result.minor, result.moments)
    if args.plot:
        from .plotting import plot_xbar
        plot_xbar(os.path.join(out, "xbar.svg"), scenario.grid.times, result.minor.Xbar,
                  "equilibrium taxes " + ", ".join(f"{g:.4g}" for g in result.gamma))
    if not result.converged:
        print(f"outer iteration did not converge (residual {result.outer_residual:.3e})",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    print("gamma = " + ", ".join(repr(float(g)) for g in result.gamma))
    return EXIT_OK


def cmd_mfg(args) -> int:
    scenario = _load(args)
    gamma = _gamma(args, scenario)
    if gamma is None:
        raise InputError("mfg needs --gamma")
    out = io.ensure_dir(args.out)
    sol, moments = solve_mfg_given_gamma(scenario, gamma)
    io.write_paths_csv(os.path.join(out, "paths.csv"), sol, moments)
    if args.plot:
        from .plotting import plot_xbar
        plot_xbar(os.path.join(out, "xbar.svg"), scenario.grid.times, sol.Xbar)
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = _load(args)
    gamma = _gamma(args, scenario)
    if args.paths < 2:
        raise InputError("--paths must be >= 2")
    out = io.ensure_dir(args.out)
    if gamma is None:
        result = solve_m4fne(scenario)
        if not result.converged:
            print("outer iteration did not converge; validating the last iterate",
                  file=sys.stderr)
        gamma, sol, moments = result.gamma, result.minor, result.moments
    else:
        sol, moments = solve_mfg_given_gamma(scenario, gamma)
    report = validate(scenario, gamma, sol, args.paths, args.seed, flip_sign=args.wrong_sign)
    checks = consistency_checks(report, sol, moments)
    doc = io.report_to_dict(report, checks)
    doc["gamma"] = gamma.tolist()
    io.write_json(os.path.join(out, "validation.json"), doc)
    if not checks["passed"]:
        n_bad = sum(not c["passed"] for c in checks["consistency"])
        n_bad += sum(not d.passed for d in report.deviation_tests)
        print(f"validation failed: {n_bad} check(s)", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_certificate(args) -> int:
    scenario = _load(args)
    gamma = _gamma(args, scenario, default_ones=True)
    out = io.ensure_dir(args.out)
    cert = contraction_certificate(scenario, gamma)
    t_max = largest_contracting_horizon(scenario, gamma)
    io.write_json(os.path.join(out, "certificate.json"),
                  io.certificate_to_dict(cert, gamma, scenario.grid.horizon, t_max))
    print(f"C2 = {cert.c2!r}, contraction = {cert.is_contraction}")
    return EXIT_OK


SWEEP_PARAMS = ("gamma_i", "delta_i", "kappa_c", "kappa_g", "connection")


def _parse_param(name: str, M: int) -> tuple[str, int | None]:
    for prefix in ("gamma_", "delta_"):
        if name.startswith(prefix):
            try:
                idx = int(name[len(prefix):])
            except ValueError:
                break
            if not 1 <= idx <= M:
                raise InputError(f"population index in {name!r} must be in 1..{M}")
            return prefix[:-1], idx - 1
    if name in ("kappa_c", "kappa_g", "connection"):
        return name, None
    raise InputError(f"unknown sweep parameter {name!r}; expected one of {', '.join(SWEEP_PARAMS)}")


def _sweep_point(scenario: Scenario, kind: str, idx: int | None, value: Any,
                 gamma: np.ndarray | None, out: str) -> dict[str, Any]:
    """One sweep point; writes its own directory and returns a summary row."""
    if kind == "delta":
        scenario = scenario.with_population(idx, delta=float(value))
    elif kind == "kappa_c":
        scenario = scenario.with_major(kappa_c=float(value))
    elif kind == "kappa_g":
        scenario = scenario.with_major(kappa_g=float(value))
    elif kind == "connection":
        scenario = scenario.with_connection(connection_preset(str(value), scenario.M))
    io.ensure_dir(out)
    if gamma is not None:
        g = gamma.copy()
        if kind == "gamma":
            g[idx] = float(value)
        sol, moments = solve_mfg_given_gamma(scenario, g)
        converged, iterations = True, 0
    else:
        result = solve_m4fne(scenario)
        io.write_json(os.path.join(out, "result.json"), io.result_to_dict(result))
        g, sol, moments = result.gamma, result.minor, result.moments
        converged, iterations = result.converged, result.outer_iterations
    io.write_paths_csv(os.path.join(out, "paths.csv"), sol, moments)
    return {"gamma": g, "Xbar": sol.Xbar, "alphabar": moments.alphabar,
            "converged": converged, "iterations": iterations}


def cmd_sweep(args) -> int:
    scenario = _load(args)
    kind, idx = _parse_param(args.param, scenario.M)
    if kind == "connection":
        values: list[Any] = [v.strip() for v in args.values.split(",") if v.strip()]
        for v in values:
            connection_preset(v, scenario.M)
    else:
        values = _float_list(args.values)
    if not values:
        raise InputError("--values is empty")
    gamma = _gamma(args, scenario)
    if kind == "gamma":
        if gamma is None:
            raise InputError("gamma sweeps run in mfg mode and need --gamma for the other populations")
        if min(values) < scenario.options.gamma_floor:
            raise InputError("swept tax levels must be >= gamma_floor")
    mode = "solve" if gamma is None else "mfg"
    out = io.ensure_dir(args.out)
    labels = [str(v) if kind == "connection" else repr(float(v)) for v in values]
    dirs = [os.path.join(out, f"point_{k:03d}") for k in range(len(values))]
    jobs = [(scenario, kind, idx, v, gamma, d) for v, d in zip(values, dirs)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, *zip(*jobs)))
    else:
        rows = [_sweep_point(*job) for job in jobs]

    times = scenario.grid.times
    long_rows = []
    for label, row in zip(labels, rows):
        for n, t in enumerate(times):
            for i in range(scenario.M):
                long_rows.append([label, float(t), i + 1, float(row["Xbar"][i, n]),
                                  float(row["alphabar"][i, n])])
    io.write_rows(os.path.join(out, "sweep.csv"),
                  ["value", "t", "pop", "Xbar", "alphabar"], long_rows)
    io.write_rows(os.path.join(out, "sweep_gamma.csv"),
                  ["value"] + [f"gamma_{i + 1}" for i in range(scenario.M)]
                  + [f"Xbar_T_{i + 1}" for i in range(scenario.M)] + ["converged"],
                  [[label] + [float(g) for g in row["gamma"]]
                   + [float(x) for x in row["Xbar"][:, -1]] + [row["converged"]]
                   for label, row in zip(labels, rows)])
    io.write_json(os.path.join(out, "sweep_index.json"), {
        "param": args.param, "mode": mode,
        "points": [{"value": label, "dir": os.path.basename(d), "converged": row["converged"],
                    "outer_iterations": row["iterations"]}
                   for label, d, row in zip(labels, dirs, rows)],
    })
    if args.plot:
        from .plotting import plot_sweep
        plot_sweep(os.path.join(out, "sweep.svg"), times,
                   [(label, row["Xbar"]) for label, row in zip(labels, rows)], args.param)
    if not all(row["converged"] for row in rows):
        print("some sweep points did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


PRESETS = {
    "desk": lambda: desk_scenario(),
    "three-region-partial": lambda: three_region_scenario("partial", tau_sign="revenue"),
    "three-region-full": lambda: three_region_scenario("full", tau_sign="revenue"),
    "decoupled": lambda: three_region_scenario("none", tau_sign="revenue"),
}


def cmd_scenario(args) -> int:
    text = dump_scenario(PRESETS[args.preset]()) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carbon-mfg",
        description="Equilibrium carbon taxes for networked producer populations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, gamma=False):
        p.add_argument("--scenario", required=True, metavar="PATH")
        p.add_argument("--out", default=".", metavar="DIR")
        p.add_argument("--dt", type=float, help="override the time step")
        p.add_argument("--eps", type=float, help="outer tolerance")
        p.add_argument("--max-iter", type=int, help="outer iteration cap")
        p.add_argument("--tau-sign", choices=("paper", "revenue"))
        p.add_argument("--plot", action="store_true", help="also write SVG figures")
        if gamma:
            p.add_argument("--gamma", type=_float_list, metavar="LIST",
                           help="comma-separated tax levels, one per population")

    p = sub.add_parser("solve", help="joint regulator/producer equilibrium")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("mfg", help="producer equilibrium for given taxes")
    common(p, gamma=True)
    p.set_defaults(func=cmd_mfg)

    p = sub.add_parser("validate", help="Monte Carlo check of a solution")
    common(p, gamma=True)
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--wrong-sign", action="store_true",
                   help="test mode: validate the negated feedback, which must fail")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("certificate", help="contraction constants of the inner map")
    common(p, gamma=True)
    p.set_defaults(func=cmd_certificate)

    p = sub.add_parser("sweep", help="repeat a solve over parameter values")
    common(p, gamma=True)
    p.add_argument("--param", required=True,
                   help="gamma_<i>, delta_<i>, kappa_c, kappa_g or connection")
    p.add_argument("--values", required=True, help="comma-separated values or preset names")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenario", help="print a preset scenario document")
    p.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p.add_argument("--output", metavar="PATH")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InnerConvergenceError, SingularMajorSystemError, EquilibriumCheckError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
