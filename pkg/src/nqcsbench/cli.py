"""Command line entry point.

Verbs: ``analyze`` certifies one configuration, ``sweep`` traces the
interval/attenuation tradeoff grid, ``simulate`` validates a certificate
by Monte Carlo, and ``verify-containment`` samples the polytopic
envelope against the exact closed loop.

Exit codes: 0 success, 2 no certificate found, 3 invalid input,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .config import load_config
from .errors import (
    CertificateInvalidError,
    ConfigError,
    ContainmentViolationError,
    DimensionError,
    DomainError,
    HorizonTooShortError,
    IllConditionedDecompositionError,
    TightnessNotAchievedError,
)
from .overapprox import build_polytopic_model, verify_containment
from .pipeline import analyze, simulate_and_check, sweep_tradeoff, write_manifest

EXIT_OK = 0
EXIT_NO_CERTIFICATE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nqcsbench",
        description="stability and performance workbench for networked quantized control",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("analyze", "sweep", "simulate", "verify-containment"):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="configuration file path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="base random seed")
        p.add_argument("--workers", type=int, default=1, help="worker process count")
        p.add_argument("--format", choices=["csv"], default="csv", help="output format")
    return parser


def _certificate_dict(cert) -> dict:
    return {
        "margin": cert.margin,
        "a1": cert.a1, "a2": cert.a2, "a3": cert.a3, "a4": cert.a4, "a5": cert.a5,
        "c1": cert.c1, "c2": cert.c2, "c3": cert.c3,
        "gamma1": cert.gamma1,
        "gamma2": "inf" if math.isinf(cert.gamma2) else cert.gamma2,
    }


def _run_analyze(config, out_dir, seed, workers) -> int:
    run_id = write_manifest(config, out_dir, seed, "analyze")
    result = analyze(config, seed=seed)
    report = {
        "run_id": run_id,
        "tightness": result.model.varpi,
        "triangles": result.model.vertex_matrix_count,
        "solver_status": result.outcome.status,
        "solver_margin": result.outcome.worst_margin,
        "iterations": result.outcome.iterations,
    }
    if result.containment is not None:
        report["containment"] = {
            "samples": result.containment.samples,
            "violations": result.containment.violations,
            "max_residual": result.containment.max_residual,
        }
    if result.certified:
        report["certificate"] = _certificate_dict(result.certificate)
        np.savez(
            os.path.join(out_dir, f"certificate_{run_id}.npz"),
            **{f"p_{i + 1}": p for i, p in enumerate(result.certificate.p_matrices)},
        )
    else:
        report["failure"] = result.failure
    path = os.path.join(out_dir, f"analysis_{run_id}.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(f"analysis report: {path}")
    if result.certified:
        print(f"certificate found, solver margin {result.outcome.worst_margin:.3e}")
        return EXIT_OK
    print(f"no certificate: {result.failure}")
    return EXIT_NO_CERTIFICATE


def _run_sweep(config, out_dir, seed, workers) -> int:
    run_id = write_manifest(config, out_dir, seed, "sweep")
    out_path = os.path.join(out_dir, f"sweep_{run_id}.csv")
    rows = sweep_tradeoff(config, out_path, seed=seed, workers=workers)
    feasible = sum(1 for r in rows if r.feasible)
    print(f"sweep rows: {len(rows)} ({feasible} feasible) -> {out_path}")
    return EXIT_OK if feasible else EXIT_NO_CERTIFICATE


def _run_simulate(config, out_dir, seed, workers) -> int:
    run_id = write_manifest(config, out_dir, seed, "simulate")
    result = analyze(config, seed=seed)
    cert = result.certificate
    if cert is None:
        print(f"no certificate ({result.failure}); simulating without bound checks")
    out = simulate_and_check(config, cert, out_dir, seed=seed, workers=workers,
                             run_id=run_id)
    for name, rep in out["reports"].items():
        print(f"{name}: {'pass' if rep.passed else 'FAIL'}")
    print(f"trace: {out['paths']['trace']}")
    if cert is None:
        return EXIT_NO_CERTIFICATE
    return EXIT_OK


def _run_verify_containment(config, out_dir, seed, workers) -> int:
    run_id = write_manifest(config, out_dir, seed, "verify-containment")
    proc = config.procedure
    model = build_polytopic_model(
        config.plant, config.controller, config.net, proc.n_a, proc.n_b,
        resolution=proc.resolution,
    )
    report = verify_containment(
        model, config.plant, config.controller, config.net,
        samples=proc.containment_samples, seed=seed,
    )
    path = os.path.join(out_dir, f"containment_{run_id}.json")
    with open(path, "w") as fh:
        json.dump(
            {
                "run_id": run_id,
                "samples": report.samples,
                "nodes": report.nodes,
                "violations": report.violations,
                "max_block_norm": report.max_block_norm,
                "max_residual": report.max_residual,
            },
            fh, indent=2, sort_keys=True,
        )
    status = "ok" if report.ok else f"{report.violations} violations"
    print(f"containment over {report.samples} samples per node: {status}")
    return EXIT_OK if report.ok else EXIT_NUMERICAL


_HANDLERS = {
    "analyze": _run_analyze,
    "sweep": _run_sweep,
    "simulate": _run_simulate,
    "verify-containment": _run_verify_containment,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except (ConfigError, DimensionError, DomainError, FileNotFoundError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    os.makedirs(args.out, exist_ok=True)
    try:
        return _HANDLERS[args.verb](config, args.out, args.seed, args.workers)
    except (ConfigError, DimensionError, DomainError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TightnessNotAchievedError as exc:
        print(f"no certificate: {exc}", file=sys.stderr)
        return EXIT_NO_CERTIFICATE
    except (IllConditionedDecompositionError, ContainmentViolationError,
            CertificateInvalidError, HorizonTooShortError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
