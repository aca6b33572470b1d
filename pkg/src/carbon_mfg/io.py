"""Result files: result.json, paths.csv, validation.json, certificate.json, sweep.csv."""

from __future__ import annotations

import csv
import json
import os
from typing import Any, Iterable

import numpy as np

from .fbode import ContractionCertificate, MinorSolution
from .moments import MomentPaths
from .montecarlo import McReport
from .nash import EquilibriumResult

RESULT_SCHEMA_VERSION = 1
PATHS_HEADER = ["t", "pop", "Xbar", "alphabar", "A", "B", "V", "E_alpha2"]


def _floats(x) -> Any:
    return np.asarray(x, dtype=float).tolist()


def write_json(path: str, doc: dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=True)
        fh.write("\n")


def result_to_dict(result: EquilibriumResult) -> dict[str, Any]:
    return {
        "schema_version": RESULT_SCHEMA_VERSION,
        "gamma": _floats(result.gamma),
        "tau": _floats(result.tau),
        "floored": [bool(f) for f in result.floored],
        "outer_iterations": int(result.outer_iterations),
        "outer_residual": float(result.outer_residual),
        "converged": bool(result.converged),
        "e_alpha2_integral": _floats(result.moments.e_alpha2_integral),
    }


def read_result(path: str) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != RESULT_SCHEMA_VERSION:
        raise ValueError(f"unsupported result schema_version {doc.get('schema_version')!r}")
    return doc


def write_paths_csv(path: str, sol: MinorSolution, moments: MomentPaths) -> None:
    t = sol.grid.times
    M = sol.A.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PATHS_HEADER)
        for n in range(len(t)):
            for i in range(M):
                w.writerow([repr(float(t[n])), i + 1] + [
                    repr(float(v)) for v in (
                        sol.Xbar[i, n], moments.alphabar[i, n], sol.A[i, n], sol.B[i, n],
                        moments.V[i, n], moments.e_alpha2[i, n])
                ])


def read_paths_csv(path: str) -> dict[str, np.ndarray]:
    """Columns of a paths.csv file reshaped to (M, n_T + 1) arrays; ``t`` is 1-D."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header != PATHS_HEADER:
        raise ValueError(f"unexpected paths.csv header {header}")
    data = np.array(body, dtype=float)
    M = int(data[:, 1].max())
    out = {name: data[:, k].reshape(-1, M).T.copy() for k, name in enumerate(header)}
    out["t"] = out["t"][0]
    del out["pop"]
    return out


def certificate_to_dict(cert: ContractionCertificate, gamma, horizon: float,
                        contracting_horizon: float) -> dict[str, Any]:
    return {
        "gamma": _floats(gamma),
        "horizon": float(horizon),
        "c1": cert.c1,
        "c2": cert.c2,
        "norm_B_sup": cert.norm_B_sup,
        "norm_Xi": cert.norm_Xi,
        "is_contraction": cert.is_contraction,
        "largest_contracting_horizon": contracting_horizon,
    }


def report_to_dict(report: McReport, checks: dict[str, Any]) -> dict[str, Any]:
    return {
        "n_paths": report.n_paths,
        "seed": report.seed,
        "empirical_mean": _floats(report.empirical_mean),
        "empirical_var": _floats(report.empirical_var),
        "empirical_e_alpha2_integral": _floats(report.empirical_e_alpha2_integral),
        "standard_errors": {
            "mean": _floats(report.se_mean),
            "var": _floats(report.se_var),
            "e_alpha2_integral": _floats(report.se_e_alpha2_integral),
        },
        "deviation_tests": [
            {
                "population": d.population,
                "perturbation": d.perturbation,
                "cost_equilibrium": d.cost_equilibrium,
                "cost_deviated": d.cost_deviated,
                "standard_error": d.standard_error,
                "passed": d.passed,
            }
            for d in report.deviation_tests
        ],
        "checks": checks,
        "passed": bool(checks["passed"]),
    }


def write_rows(path: str, header: list[str], rows: Iterable[list[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
