"""Problem data for the multi-population carbon-tax game.

A :class:`Scenario` bundles everything a solve needs: the minor-player
populations, the connection matrix between them, the regulators' cost
weights, the time grid and the numerical options.  Scenarios are immutable
and round-trip through a versioned JSON document.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Sequence

import numpy as np

SCHEMA_VERSION = 1

TAU_SIGNS = ("paper", "revenue")


class ScenarioError(ValueError):
    """Raised when a scenario document cannot be parsed or fails validation."""


@dataclass(frozen=True)
class PopulationParams:
    eta: float
    sigma: float
    kappa: float
    delta: float
    x0_mean: float
    x0_var: float

    def __post_init__(self) -> None:
        for name in ("eta", "sigma", "kappa", "delta", "x0_mean", "x0_var"):
            _require_finite(name, getattr(self, name))
        if self.eta <= 0:
            raise ScenarioError("eta must be > 0")
        if self.kappa <= 0:
            raise ScenarioError("kappa must be > 0")
        if self.delta <= 0:
            raise ScenarioError("delta must be > 0")
        if self.sigma < 0:
            raise ScenarioError("sigma must be >= 0")
        if self.x0_var < 0:
            raise ScenarioError("x0_var must be >= 0")


@dataclass(frozen=True)
class MajorParams:
    kappa_c: float
    kappa_g: float

    def __post_init__(self) -> None:
        _require_finite("kappa_c", self.kappa_c)
        _require_finite("kappa_g", self.kappa_g)
        if self.kappa_g <= 0:
            raise ScenarioError("kappa_g must be > 0")


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self) -> None:
        _require_finite("horizon", self.horizon)
        if self.horizon <= 0:
            raise ScenarioError("horizon must be > 0")
        if isinstance(self.n_steps, bool) or int(self.n_steps) != self.n_steps:
            raise ScenarioError("n_steps must be an integer")
        if self.n_steps < 2:
            raise ScenarioError("n_steps must be >= 2")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    @classmethod
    def from_dt(cls, horizon: float, dt: float) -> "TimeGrid":
        if not dt > 0:
            raise ScenarioError("dt must be > 0")
        return cls(horizon, max(2, int(round(horizon / dt))))


@dataclass(frozen=True)
class SolverOptions:
    eps_inner: float = 1e-8
    eps_outer: float = 1e-8
    max_iter_inner: int = 10_000
    max_iter_outer: int = 500
    damping_inner: float = 0.5
    damping_outer: float = 0.5
    gamma_floor: float = 1e-2
    tau_sign: str = "paper"

    def __post_init__(self) -> None:
        for name in ("eps_inner", "eps_outer", "gamma_floor"):
            value = getattr(self, name)
            _require_finite(name, value)
            if value <= 0:
                raise ScenarioError(f"{name} must be > 0")
        for name in ("max_iter_inner", "max_iter_outer"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ScenarioError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(value))
        for name in ("damping_inner", "damping_outer"):
            value = getattr(self, name)
            _require_finite(name, value)
            if not 0 < value <= 1:
                raise ScenarioError(f"{name} must be in (0, 1]")
        if self.tau_sign not in TAU_SIGNS:
            raise ScenarioError(f"tau_sign must be one of {TAU_SIGNS}")


@dataclass(frozen=True, eq=False)
class Scenario:
    populations: tuple[PopulationParams, ...]
    connection: np.ndarray
    major: MajorParams
    grid: TimeGrid
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self) -> None:
        pops = tuple(self.populations)
        object.__setattr__(self, "populations", pops)
        G = np.array(self.connection, dtype=float)
        validate_connection(G)
        if G.shape[0] != len(pops):
            raise ScenarioError(
                f"connection is {G.shape[0]}x{G.shape[0]} but there are "
                f"{len(pops)} populations"
            )
        G.flags.writeable = False
        object.__setattr__(self, "connection", G)

    @property
    def M(self) -> int:
        return len(self.populations)

    def column(self, name: str) -> np.ndarray:
        """Population parameter ``name`` as a length-M array."""
        return np.array([getattr(p, name) for p in self.populations], dtype=float)

    @property
    def row_sums(self) -> np.ndarray:
        return self.connection.sum(axis=1)

    def with_options(self, **changes: Any) -> "Scenario":
        return replace(self, options=replace(self.options, **changes))

    def with_grid(self, grid: TimeGrid) -> "Scenario":
        return replace(self, grid=grid)

    def with_major(self, **changes: Any) -> "Scenario":
        return replace(self, major=replace(self.major, **changes))

    def with_connection(self, G: Any) -> "Scenario":
        return replace(self, connection=np.array(G, dtype=float))

    def with_population(self, index: int, **changes: Any) -> "Scenario":
        pops = list(self.populations)
        pops[index] = replace(pops[index], **changes)
        return replace(self, populations=tuple(pops))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.populations == other.populations
            and np.array_equal(self.connection, other.connection)
            and self.major == other.major
            and self.grid == other.grid
            and self.options == other.options
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ConnectionInfo:
    row_sums: np.ndarray
    diagonal: np.ndarray
    kind: str  # "fully connected" | "partially connected" | "decoupled"


def validate_connection(G: Any) -> ConnectionInfo:
    """Check a connection matrix and return its row sums, diagonal and kind."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ScenarioError("connection must be a square matrix")
    if G.shape[0] < 2:
        raise ScenarioError("connection must be at least 2x2")
    if not np.all(np.isfinite(G)):
        raise ScenarioError("connection entries must be finite")
    if np.any(G < 0) or np.any(G > 1):
        raise ScenarioError("connection entries must lie in [0, 1]")
    if np.all(G == 0):
        kind = "decoupled"
    elif np.all(G == 1):
        kind = "fully connected"
    else:
        kind = "partially connected"
    return ConnectionInfo(G.sum(axis=1), np.diag(G).copy(), kind)


def _require_finite(name: str, value: Any) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise ScenarioError(f"{name} must be a number")
    if not math.isfinite(value):
        raise ScenarioError(f"{name} must be finite")


# -- serialization ----------------------------------------------------------

_POP_KEYS = {f.name for f in fields(PopulationParams)}
_MAJOR_KEYS = {f.name for f in fields(MajorParams)}
_GRID_KEYS = {"horizon", "n_steps"}
_OPTION_KEYS = {f.name for f in fields(SolverOptions)}
_TOP_KEYS = {"schema_version", "populations", "connection", "major", "grid", "options"}


def _check_keys(where: str, obj: Any, allowed: set[str], required: set[str]) -> None:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where} must be an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ScenarioError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    missing = sorted(required - set(obj))
    if missing:
        raise ScenarioError(f"missing key(s) in {where}: {', '.join(missing)}")


def scenario_from_dict(doc: Any) -> Scenario:
    _check_keys("scenario", doc, _TOP_KEYS, _TOP_KEYS - {"options"})
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ScenarioError(
            f"unsupported schema_version {doc['schema_version']!r} (expected {SCHEMA_VERSION})"
        )
    if not isinstance(doc["populations"], list):
        raise ScenarioError("populations must be an array")
    pops = []
    for k, p in enumerate(doc["populations"]):
        _check_keys(f"populations[{k}]", p, _POP_KEYS, _POP_KEYS)
        pops.append(PopulationParams(**p))
    _check_keys("major", doc["major"], _MAJOR_KEYS, _MAJOR_KEYS)
    _check_keys("grid", doc["grid"], _GRID_KEYS, _GRID_KEYS)
    options = doc.get("options", {})
    _check_keys("options", options, _OPTION_KEYS, set())

    G = doc["connection"]
    if not isinstance(G, list) or not all(isinstance(row, list) for row in G):
        raise ScenarioError("connection must be an array of arrays")
    if len({len(row) for row in G}) > 1:
        raise ScenarioError("connection rows must have equal length")
    for row in G:
        for entry in row:
            _require_finite("connection entry", entry)

    return Scenario(
        populations=tuple(pops),
        connection=np.array(G, dtype=float),
        major=MajorParams(**doc["major"]),
        grid=TimeGrid(**doc["grid"]),
        options=SolverOptions(**options),
    )


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from exc
    return scenario_from_dict(doc)


def read_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "populations": [
            {name: float(getattr(p, name)) for name in
             ("eta", "sigma", "kappa", "delta", "x0_mean", "x0_var")}
            for p in scenario.populations
        ],
        "connection": scenario.connection.tolist(),
        "major": {"kappa_c": float(scenario.major.kappa_c),
                  "kappa_g": float(scenario.major.kappa_g)},
        "grid": {"horizon": float(scenario.grid.horizon),
                 "n_steps": scenario.grid.n_steps},
        "options": {f.name: getattr(scenario.options, f.name)
                    for f in fields(SolverOptions)},
    }


def dump_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2)


# -- presets ----------------------------------------------------------------

def connection_preset(name: str, M: int = 3) -> np.ndarray:
    """``full``, ``partial`` (first and last population unlinked) or ``none``."""
    if name == "full":
        return np.ones((M, M))
    if name == "partial":
        G = np.ones((M, M))
        G[0, M - 1] = G[M - 1, 0] = 0.0
        return G
    if name == "none":
        return np.zeros((M, M))
    raise ScenarioError(f"unknown connection preset {name!r}")


def three_region_scenario(
    connection: str = "partial",
    *,
    delta: float | Sequence[float] = 50.0,
    sigma: float = 0.1,
    x0_var: float = 1.0,
    kappa_c: float = 1.005,
    kappa_g: float = 1.0,
    horizon: float = 1.0,
    n_steps: int = 100,
    **options: Any,
) -> Scenario:
    """Three-population benchmark.

    Initial means (25, 20, 15), unit efficiency and terminal weight 0.1 are
    fixed; everything else is set by the arguments.
    """
    deltas = [float(delta)] * 3 if np.isscalar(delta) else [float(d) for d in delta]
    pops = tuple(
        PopulationParams(eta=1.0, sigma=sigma, kappa=0.1, delta=d, x0_mean=x0, x0_var=x0_var)
        for d, x0 in zip(deltas, (25.0, 20.0, 15.0))
    )
    return Scenario(
        populations=pops,
        connection=connection_preset(connection, 3),
        major=MajorParams(kappa_c=kappa_c, kappa_g=kappa_g),
        grid=TimeGrid(horizon, n_steps),
        options=SolverOptions(**options),
    )


def desk_scenario(**options: Any) -> Scenario:
    """Small asymmetric two-population instance used for cross-checks."""
    pops = (
        PopulationParams(eta=1.0, sigma=0.1, kappa=0.1, delta=0.5, x0_mean=25.0, x0_var=1.0),
        PopulationParams(eta=1.0, sigma=0.1, kappa=0.1, delta=0.5, x0_mean=20.0, x0_var=1.0),
    )
    opts = {"tau_sign": "revenue", **options}
    return Scenario(
        populations=pops,
        connection=np.ones((2, 2)),
        major=MajorParams(kappa_c=1.005, kappa_g=1.0),
        grid=TimeGrid(1.0, 100),
        options=SolverOptions(**opts),
    )
