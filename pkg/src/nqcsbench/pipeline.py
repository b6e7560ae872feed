"""End-to-end analysis pipelines.

``analyze`` chains overapproximation, constraint assembly, the
feasibility solver, independent verification, and certificate
extraction.  ``sweep_tradeoff`` bisects the admissible interval bound
over a (attenuation, delay-bound) grid.  ``simulate_and_check`` runs a
Monte Carlo ensemble against a certificate.

Every entry point writes a run manifest before computing anything and
tags its CSV outputs with the manifest id, so any output file can be
traced back to the exact effective configuration that produced it.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import WorkbenchConfig, config_to_dict
from .errors import NqcsError, TightnessNotAchievedError
from .lmi import (
    FixedParams,
    LmiCertificate,
    LmiProblem,
    assemble_periodic,
    assemble_quadratic,
    derive_certificate,
    tod_q_matrices,
)
from .model import NetworkConfig, TimingRegion
from .overapprox import (
    ContainmentReport,
    PolytopicModel,
    refine_until_tight,
    verify_containment,
)
from .sdp import (
    AffineConstraintSystem,
    SolveOutcome,
    solve_feasibility,
    verify_outcome,
)
from .sim import (
    BoundReport,
    check_emsiss_bound,
    check_hinf_sum,
    run_ensemble,
    simulate_run,
    ultimate_bound_check,
    write_trace_csv,
)
from .timing import PiecewiseTimingDistribution, UniformTimingDistribution

__all__ = [
    "AnalysisResult",
    "SweepRow",
    "analyze",
    "sweep_tradeoff",
    "simulate_and_check",
    "write_manifest",
    "with_region",
]

SWEEP_HEADER = ["gamma2", "h_mad", "h_mati_max", "feasible", "margin", "runtime_s"]
# deterministic per-eigensolve cost model used for the runtime column, so
# repeated sweeps produce byte-identical output
COST_PER_EIG_FLOP = 2.0e-9


@dataclass
class AnalysisResult:
    model: PolytopicModel
    problem: LmiProblem
    outcome: SolveOutcome
    certificate: LmiCertificate | None
    containment: ContainmentReport | None
    failure: str | None = None
    cost_estimate_s: float = 0.0

    @property
    def certified(self) -> bool:
        return self.certificate is not None


@dataclass(frozen=True)
class SweepRow:
    gamma2: float
    h_mad: float
    h_mati_max: float
    feasible: bool
    margin: float
    runtime_s: float


def with_region(net: NetworkConfig, h_mati: float, tau_mad: float) -> NetworkConfig:
    """Network copy with a rescaled admissible timing region."""
    old = net.region
    region = TimingRegion(
        h_min=old.h_min,
        h_mati=h_mati,
        tau_min=min(old.tau_min, tau_mad),
        tau_mad=tau_mad,
        inflation=old.inflation,
    )
    dist = net.distribution
    if isinstance(dist, PiecewiseTimingDistribution):
        new_dist = PiecewiseTimingDistribution(
            region=region, h_edges=dist.h_edges, tau_edges=dist.tau_edges, weights=dist.weights
        )
    else:
        new_dist = UniformTimingDistribution(region)
    return dataclasses.replace(net, region=region, distribution=new_dist)


def _assemble(config: WorkbenchConfig, model: PolytopicModel, net: NetworkConfig,
              gamma2: float) -> LmiProblem:
    fixed = FixedParams(
        a3=config.analysis.a3,
        a5=config.analysis.a5,
        gamma2=gamma2,
        a4_ideal=config.analysis.a4_ideal,
    )
    kind = net.protocol.kind
    if kind in ("tod", "quadratic"):
        q_mats = (
            tod_q_matrices(model, net)
            if kind == "tod"
            else list(net.protocol.q_matrices)
        )
        return assemble_quadratic(model, net, q_mats, fixed)
    sequence = (
        list(net.protocol.sequence)
        if kind == "periodic"
        else list(range(1, net.node_count + 1))
    )
    return assemble_periodic(model, net, sequence, fixed)


def _initial_point(problem: LmiProblem, model: PolytopicModel) -> np.ndarray:
    """Structured starting point for the feasibility search.

    Identity Lyapunov matrices, triangle shares weighted by their
    probability mass, and budget scalars placed just inside their
    coupling bounds give a point that already satisfies most of the
    sign structure, which shortens the search dramatically compared to
    a random start.
    """
    layout = problem.layout
    fixed = problem.fixed
    active = problem.meta.get("active_triangles", ())
    m_count = max(len(active), 1)
    pvals = model.partition.probabilities
    mats = []
    for name, n in layout.matrices:
        if name.startswith("P_"):
            mats.append(np.eye(n))
        else:
            tri = int(name.split("_")[-1])
            mats.append(float(pvals[tri]) * np.eye(n))
    x0 = layout.pack_matrices(mats)
    for name in layout.scalars:
        idx = layout.scalar_index(name)
        if name.startswith("decay_"):
            x0[idx] = 1.02 * fixed.a3 / m_count
        elif name.startswith("errgain_"):
            x0[idx] = 0.5 * fixed.a4_cap() / m_count
        elif name.startswith("flucgain_"):
            x0[idx] = 0.9 * fixed.a5 / m_count
        elif name.startswith("outweight_"):
            x0[idx] = 1.02 / m_count
        elif name.startswith("zeta"):
            x0[idx] = 0.1
        elif name.startswith("lam"):
            x0[idx] = 1e-5
    return x0


def _cost_estimate(problem: LmiProblem, iterations: int) -> float:
    flops = sum(c.dim**3 for c in problem.constraints)
    return iterations * flops * COST_PER_EIG_FLOP


def analyze(
    config: WorkbenchConfig,
    gamma2: float | None = None,
    net: NetworkConfig | None = None,
    seed: int = 0,
    check_containment: bool = True,
) -> AnalysisResult:
    """Overapproximate, assemble, solve, verify, and certify one setup.

    A certificate is returned only when the solved point passes the
    independent eigenvalue verification and (when enabled) the sampled
    envelope containment check.
    """
    net = net if net is not None else config.net
    gamma2 = gamma2 if gamma2 is not None else config.analysis.gamma2
    proc = config.procedure
    model = refine_until_tight(
        config.plant, config.controller, net, proc.n_a, proc.n_b,
        proc.varpi_star, max_refinements=proc.refinement_cap,
        resolution=proc.resolution,
    )
    problem = _assemble(config, model, net, gamma2)
    system = AffineConstraintSystem(problem.constraints, problem.layout.dim)
    options = dataclasses.replace(config.solver, seed=config.solver.seed + seed)
    if options.initial is None:
        options = dataclasses.replace(options, initial=_initial_point(problem, model))
    outcome = solve_feasibility(system, options)
    cost = _cost_estimate(problem, outcome.iterations)
    if not outcome.feasible:
        return AnalysisResult(model, problem, outcome, None, None,
                              failure=outcome.status, cost_estimate_s=cost)
    ok, worst = verify_outcome(system, outcome.x, options.requested_margin)
    if not ok:
        return AnalysisResult(model, problem, outcome, None, None,
                              failure=f"verification failed at margin {worst:.3e}",
                              cost_estimate_s=cost)
    containment = None
    if check_containment:
        containment = verify_containment(
            model, config.plant, config.controller, net,
            samples=proc.containment_samples, seed=seed,
        )
        if not containment.ok:
            return AnalysisResult(model, problem, outcome, None, containment,
                                  failure="containment violations", cost_estimate_s=cost)
    cert = derive_certificate(problem, outcome.x, outcome.worst_margin)
    if config.analysis.c3_override is not None:
        cert = dataclasses.replace(cert, c3=config.analysis.c3_override)
    return AnalysisResult(model, problem, outcome, cert, containment,
                          cost_estimate_s=cost)


def _sweep_point(args) -> SweepRow:
    config, gamma2, h_mad, seed = args
    lo, hi = config.sweep.h_mati_lo, config.sweep.h_mati_hi
    rel_tol = config.sweep.rel_tol

    cost_total = 0.0
    best_margin = math.nan

    def feasible_at(h_mati: float) -> bool:
        nonlocal cost_total, best_margin
        try:
            net = with_region(config.net, h_mati, h_mad)
            res = analyze(config, gamma2=gamma2, net=net, seed=seed,
                          check_containment=False)
        except (TightnessNotAchievedError, NqcsError):
            return False
        cost_total += res.cost_estimate_s
        if res.certified:
            best_margin = res.outcome.worst_margin
        return res.certified

    if h_mad >= hi or not feasible_at(max(lo, h_mad * (1.0 + 1e-9))):
        return SweepRow(gamma2, h_mad, math.nan, False, math.nan, cost_total)
    lo = max(lo, h_mad * (1.0 + 1e-9))
    if feasible_at(hi):
        return SweepRow(gamma2, h_mad, hi, True, best_margin, cost_total)
    good, bad = lo, hi
    while bad - good > rel_tol * good:
        mid = math.sqrt(good * bad)
        if feasible_at(mid):
            good = mid
        else:
            bad = mid
    return SweepRow(gamma2, h_mad, good, True, best_margin, cost_total)


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.17g}"
    return str(value)


def sweep_tradeoff(
    config: WorkbenchConfig,
    out_path,
    seed: int = 0,
    workers: int = 1,
) -> list[SweepRow]:
    """Tradeoff grid: max admissible interval bound per (gamma2, delay bound).

    Rows are computed per grid point (concurrently when workers > 1),
    ordered by grid index, and appended to the CSV as soon as all earlier
    rows are written so partial results survive interruption.
    """
    grid = [(config, g, d, seed) for g in config.sweep.gamma2_values
            for d in config.sweep.h_mad_grid]
    rows: list[SweepRow] = []
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        fh.flush()
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(_sweep_point, grid)
                for row in results:
                    rows.append(row)
                    writer.writerow([_format_cell(v) for v in dataclasses.astuple(row)])
                    fh.flush()
        else:
            for point in grid:
                row = _sweep_point(point)
                rows.append(row)
                writer.writerow([_format_cell(v) for v in dataclasses.astuple(row)])
                fh.flush()
    return rows


def simulate_and_check(
    config: WorkbenchConfig,
    certificate: LmiCertificate | None,
    out_dir,
    seed: int = 0,
    workers: int = 1,
    run_id: str = "run",
) -> dict:
    """Monte Carlo ensemble, empirical bound checks, and CSV export.

    Always writes the seed-zero trace; the certificate checks run only
    when a certificate is supplied.
    """
    x0 = config.default_x0()
    sim = config.simulation
    first = simulate_run(config.plant, config.controller, config.net,
                         config.quantizer, x0, sim.horizon, seed)
    trace_path = os.path.join(out_dir, f"trace_{run_id}.csv")
    write_trace_csv(first, trace_path)
    stats = run_ensemble(
        config.plant, config.controller, config.net, config.quantizer,
        x0, sim.runs, sim.horizon, seed, confidence=sim.confidence,
        workers=workers,
    )
    reports: dict[str, BoundReport] = {}
    if certificate is not None:
        reports["emsiss"] = check_emsiss_bound(stats, certificate, x0)
        if math.isfinite(certificate.gamma2):
            reports["hinf_sum"] = check_hinf_sum(stats, certificate, x0)
        reports["ultimate_bound"] = ultimate_bound_check(stats, certificate, config.quantizer)
    stats_path = os.path.join(out_dir, f"ensemble_{run_id}.csv")
    with open(stats_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "mean_norm2_x", "mean_norm2_eps", "mean_norm2_z",
                         "half_norm2_x"])
        for k in range(stats.horizon + 1):
            writer.writerow([
                str(k),
                f"{stats.mean_sq_state[k]:.17g}",
                f"{stats.mean_sq_eps[k]:.17g}",
                f"{stats.mean_sq_output[k]:.17g}",
                f"{stats.half_state[k]:.17g}",
            ])
    verdict_path = os.path.join(out_dir, f"verdict_{run_id}.txt")
    with open(verdict_path, "w") as fh:
        fh.write(f"runs={stats.runs} horizon={stats.horizon}\n")
        fh.write(f"alpha_freq={stats.alpha_freq:.6f} beta_freq={stats.beta_freq:.6f}\n")
        if not reports:
            fh.write("no certificate supplied; bound checks skipped\n")
        for name, rep in reports.items():
            status = "pass" if rep.passed else f"FAIL ({len(rep.violations)} violations)"
            fh.write(f"{name}: {status}\n")
    return {"stats": stats, "reports": reports, "trace": first,
            "paths": {"trace": trace_path, "ensemble": stats_path, "verdict": verdict_path}}


def write_manifest(config: WorkbenchConfig, out_dir, seed: int, verb: str) -> str:
    """Write the run manifest and return the run id naming all outputs."""
    payload = {
        "tool": "nqcsbench",
        "version": __version__,
        "verb": verb,
        "seed": seed,
        "config": config_to_dict(config),
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    run_id = hashlib.sha256(blob).hexdigest()[:12]
    payload["run_id"] = run_id
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"manifest_{run_id}.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return run_id
