"""Configuration file loading and validation.

One YAML document describes the whole workbench run: loop matrices,
network layout, timing law, quantizer, overapproximation thresholds,
fixed analysis parameters, solver and simulation options, and the sweep
grid.  Everything is validated up front; defaults are materialized into
the returned object so a run manifest can echo the exact effective
configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .model import (
    ControllerModel,
    NetworkConfig,
    PlantModel,
    ProtocolSpec,
    QuantizerConfig,
    TimingRegion,
    system_dims,
)
from .sdp import SolveOptions
from .timing import make_distribution

__all__ = [
    "ProcedureOptions",
    "AnalysisOptions",
    "SimulationOptions",
    "SweepOptions",
    "WorkbenchConfig",
    "load_config",
    "config_to_dict",
]

DEFAULT_VARPI_STAR = 10.0


@dataclass(frozen=True)
class ProcedureOptions:
    """Overapproximation partition and tightness thresholds."""

    n_a: int = 2
    n_b: int = 2
    varpi_star: float = DEFAULT_VARPI_STAR
    refinement_cap: int = 3
    containment_samples: int = 500
    resolution: int = 50

    def __post_init__(self):
        if self.n_a < 1 or self.n_b < 1:
            raise ConfigError("partition counts must be at least 1")
        if self.varpi_star <= 0.0:
            raise ConfigError("tightness threshold must be positive")
        if self.refinement_cap < 0:
            raise ConfigError("refinement cap must be nonnegative")
        if self.containment_samples < 1:
            raise ConfigError("containment sampling needs at least one sample")


@dataclass(frozen=True)
class AnalysisOptions:
    """Fixed scalar parameters of the feasibility conditions."""

    a3: float = 1e-2
    a5: float = 1e-4
    gamma2: float = math.inf
    a4_ideal: float = 1e3
    c3_override: float | None = None

    def __post_init__(self):
        if self.a3 <= 0.0 or self.a5 <= 0.0:
            raise ConfigError("decay and fluctuation budgets must be positive")
        if self.gamma2 <= self.a5:
            raise ConfigError("attenuation level must exceed the fluctuation budget")
        if self.c3_override is not None and self.c3_override <= 0.0:
            raise ConfigError("c3 override must be positive")


@dataclass(frozen=True)
class SimulationOptions:
    runs: int = 200
    horizon: int = 500
    confidence: float = 0.99
    x0: np.ndarray | None = None

    def __post_init__(self):
        if self.runs < 1 or self.horizon < 1:
            raise ConfigError("simulation needs at least one run and one step")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must lie in (0, 1)")
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))


@dataclass(frozen=True)
class SweepOptions:
    """Tradeoff grid: one bisection on the interval bound per
    (attenuation level, delay bound) pair."""

    gamma2_values: tuple[float, ...] = (math.inf,)
    h_mad_grid: tuple[float, ...] = (1e-3, 5e-3, 1e-2, 2e-2, 5e-2)
    h_mati_lo: float = 2e-3
    h_mati_hi: float = 0.2
    rel_tol: float = 0.05

    def __post_init__(self):
        if not self.gamma2_values or not self.h_mad_grid:
            raise ConfigError("sweep grids must be non-empty")
        if any(g <= 0.0 for g in self.gamma2_values):
            raise ConfigError("attenuation levels must be positive")
        if any(d <= 0.0 for d in self.h_mad_grid):
            raise ConfigError("delay bounds must be positive")
        if not 0.0 < self.h_mati_lo < self.h_mati_hi:
            raise ConfigError("bisection bracket must satisfy 0 < lo < hi")
        if not 0.0 < self.rel_tol < 1.0:
            raise ConfigError("bisection relative tolerance must lie in (0, 1)")


@dataclass(frozen=True)
class WorkbenchConfig:
    plant: PlantModel
    controller: ControllerModel
    net: NetworkConfig
    quantizer: QuantizerConfig
    procedure: ProcedureOptions
    analysis: AnalysisOptions
    solver: SolveOptions
    simulation: SimulationOptions
    sweep: SweepOptions
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        dims = system_dims(self.plant, self.controller)
        if self.net.n_y != dims.n_y or self.net.n_u != dims.n_u:
            raise ConfigError("network selectors do not match the loop dimensions")
        if self.quantizer.nodes != self.net.node_count:
            raise ConfigError("quantizer must define one node per network node")
        if self.simulation.x0 is not None and self.simulation.x0.shape != (dims.n_x,):
            raise ConfigError(f"initial state must have length {dims.n_x}")

    def default_x0(self) -> np.ndarray:
        dims = system_dims(self.plant, self.controller)
        if self.simulation.x0 is not None:
            return self.simulation.x0
        x0 = np.zeros(dims.n_x)
        x0[: dims.n_p] = 0.1
        return x0


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {key!r} in section {where!r}")
    return section[key]


def _matrix(section: dict, key: str, where: str) -> np.ndarray:
    try:
        return np.array(_require(section, key, where), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key} is not a numeric array: {exc}") from None


def _float(value, name: str) -> float:
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("inf", ".inf", "infinity", "ideal"):
            return math.inf
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None


def load_config(path) -> WorkbenchConfig:
    """Parse and validate a workbench configuration file."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise ConfigError(f"cannot parse {path}{where}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return build_config(doc)


def build_config(doc: dict) -> WorkbenchConfig:
    plant_sec = _require(doc, "plant", "top level")
    plant = PlantModel(
        a=_matrix(plant_sec, "a", "plant"),
        b=_matrix(plant_sec, "b", "plant"),
        c=_matrix(plant_sec, "c", "plant"),
    )
    ctrl_sec = _require(doc, "controller", "top level")
    controller = ControllerModel(
        a=_matrix(ctrl_sec, "a", "controller"),
        b=_matrix(ctrl_sec, "b", "controller"),
        c=_matrix(ctrl_sec, "c", "controller"),
        d=_matrix(ctrl_sec, "d", "controller"),
    )

    timing_sec = _require(doc, "timing", "top level")
    region = TimingRegion(
        h_min=_float(_require(timing_sec, "h_min", "timing"), "timing.h_min"),
        h_mati=_float(_require(timing_sec, "h_mati", "timing"), "timing.h_mati"),
        tau_min=_float(timing_sec.get("tau_min", 0.0), "timing.tau_min"),
        tau_mad=_float(timing_sec.get("tau_mad", 0.0), "timing.tau_mad"),
    )
    dist_sec = timing_sec.get("distribution", {"kind": "uniform"})
    dist_kind = dist_sec.get("kind", "uniform")
    dist_kwargs = {}
    if dist_kind == "piecewise":
        dist_kwargs = {
            "h_edges": _matrix(dist_sec, "h_edges", "timing.distribution"),
            "tau_edges": _matrix(dist_sec, "tau_edges", "timing.distribution"),
            "weights": _matrix(dist_sec, "weights", "timing.distribution"),
        }
    distribution = make_distribution(dist_kind, region, **dist_kwargs)

    net_sec = _require(doc, "network", "top level")
    proto_sec = _require(net_sec, "protocol", "network")
    protocol = ProtocolSpec(
        kind=_require(proto_sec, "kind", "network.protocol"),
        q_matrices=tuple(
            np.array(q, dtype=float) for q in proto_sec.get("q_matrices", ())
        ),
        sequence=tuple(int(s) for s in proto_sec.get("sequence", ())),
    )
    net = NetworkConfig(
        gamma_y=tuple(np.array(g, dtype=float) for g in _require(net_sec, "gamma_y", "network")),
        gamma_u=tuple(np.array(g, dtype=float) for g in _require(net_sec, "gamma_u", "network")),
        region=region,
        distribution=distribution,
        alpha_bar=_float(_require(net_sec, "alpha_bar", "network"), "network.alpha_bar"),
        beta_bar=_float(_require(net_sec, "beta_bar", "network"), "network.beta_bar"),
        protocol=protocol,
        u_direct=bool(net_sec.get("u_direct", False)),
    )

    quant_sec = _require(doc, "quantizer", "top level")
    quantizer = QuantizerConfig(
        range_=_matrix(quant_sec, "range", "quantizer"),
        error_bound=_matrix(quant_sec, "error_bound", "quantizer"),
        dead_zone=_matrix(quant_sec, "dead_zone", "quantizer"),
        zoom=_matrix(quant_sec, "zoom", "quantizer"),
        mu0=_matrix(quant_sec, "mu0", "quantizer"),
    )

    proc_sec = doc.get("procedure", {})
    procedure = ProcedureOptions(
        n_a=int(proc_sec.get("n_a", 2)),
        n_b=int(proc_sec.get("n_b", 2)),
        varpi_star=_float(proc_sec.get("varpi_star", DEFAULT_VARPI_STAR), "procedure.varpi_star"),
        refinement_cap=int(proc_sec.get("refinement_cap", 3)),
        containment_samples=int(proc_sec.get("containment_samples", 500)),
        resolution=int(proc_sec.get("resolution", 50)),
    )

    lmi_sec = doc.get("analysis", {})
    analysis = AnalysisOptions(
        a3=_float(lmi_sec.get("a3", 1e-2), "analysis.a3"),
        a5=_float(lmi_sec.get("a5", 1e-4), "analysis.a5"),
        gamma2=_float(lmi_sec.get("gamma2", math.inf), "analysis.gamma2"),
        a4_ideal=_float(lmi_sec.get("a4_ideal", 1e3), "analysis.a4_ideal"),
        c3_override=(
            _float(lmi_sec["c3_override"], "analysis.c3_override")
            if "c3_override" in lmi_sec
            else None
        ),
    )

    solver_sec = doc.get("solver", {})
    solver = SolveOptions(
        max_iterations=int(solver_sec.get("max_iterations", 4000)),
        requested_margin=_float(solver_sec.get("requested_margin", 1e-8), "solver.requested_margin"),
        seed=int(solver_sec.get("seed", 0)),
        stage_iterations=int(solver_sec.get("stage_iterations", 120)),
        time_budget_s=(
            _float(solver_sec["time_budget_s"], "solver.time_budget_s")
            if "time_budget_s" in solver_sec
            else None
        ),
    )

    sim_sec = doc.get("simulation", {})
    simulation = SimulationOptions(
        runs=int(sim_sec.get("runs", 200)),
        horizon=int(sim_sec.get("horizon", 500)),
        confidence=_float(sim_sec.get("confidence", 0.99), "simulation.confidence"),
        x0=np.array(sim_sec["x0"], dtype=float) if "x0" in sim_sec else None,
    )

    sweep_sec = doc.get("sweep", {})
    sweep = SweepOptions(
        gamma2_values=tuple(
            _float(g, "sweep.gamma2_values") for g in sweep_sec.get("gamma2_values", [math.inf])
        ),
        h_mad_grid=tuple(
            _float(d, "sweep.h_mad_grid") for d in sweep_sec.get("h_mad_grid", [1e-3, 5e-3, 1e-2, 2e-2, 5e-2])
        ),
        h_mati_lo=_float(sweep_sec.get("h_mati_lo", 2e-3), "sweep.h_mati_lo"),
        h_mati_hi=_float(sweep_sec.get("h_mati_hi", 0.2), "sweep.h_mati_hi"),
        rel_tol=_float(sweep_sec.get("rel_tol", 0.05), "sweep.rel_tol"),
    )

    return WorkbenchConfig(
        plant=plant,
        controller=controller,
        net=net,
        quantizer=quantizer,
        procedure=procedure,
        analysis=analysis,
        solver=solver,
        simulation=simulation,
        sweep=sweep,
        raw=doc,
    )


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def config_to_dict(config: WorkbenchConfig) -> dict:
    """Effective configuration with all defaults materialized."""
    return _jsonable(
        {
            "plant": {"a": config.plant.a, "b": config.plant.b, "c": config.plant.c},
            "controller": {
                "a": config.controller.a,
                "b": config.controller.b,
                "c": config.controller.c,
                "d": config.controller.d,
            },
            "timing": {
                "h_min": config.net.region.h_min,
                "h_mati": config.net.region.h_mati,
                "tau_min": config.net.region.tau_min,
                "tau_mad": config.net.region.tau_mad,
            },
            "network": {
                "gamma_y": [g for g in config.net.gamma_y],
                "gamma_u": [g for g in config.net.gamma_u],
                "alpha_bar": config.net.alpha_bar,
                "beta_bar": config.net.beta_bar,
                "protocol": config.net.protocol.kind,
                "u_direct": config.net.u_direct,
            },
            "quantizer": {
                "range": config.quantizer.range_,
                "error_bound": config.quantizer.error_bound,
                "dead_zone": config.quantizer.dead_zone,
                "zoom": config.quantizer.zoom,
                "mu0": config.quantizer.mu0,
            },
            "procedure": vars(config.procedure),
            "analysis": vars(config.analysis),
            "solver": {
                "max_iterations": config.solver.max_iterations,
                "requested_margin": config.solver.requested_margin,
                "seed": config.solver.seed,
                "stage_iterations": config.solver.stage_iterations,
                "time_budget_s": config.solver.time_budget_s,
            },
            "simulation": vars(config.simulation),
            "sweep": vars(config.sweep),
        }
    )
