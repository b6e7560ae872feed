"""Acceptance checks: one test per release criterion, with timing limits.

Heavy artifacts (the certified benchmark analysis and the tradeoff
sweep) are computed once per session and shared across criteria.
"""

import math
import time

import numpy as np
import pytest

from nqcsbench.config import load_config
from nqcsbench.linalg import matexp, matexp_integral
from nqcsbench.overapprox import build_polytopic_model, verify_containment
from nqcsbench.pipeline import analyze, simulate_and_check, sweep_tradeoff
from nqcsbench.sim import replay_residuals, run_ensemble, simulate_run

from conftest import random_stable_matrix
from test_sdp import contradictory_system, lyapunov_system, random_schur_stable
from nqcsbench.sdp import SolveOptions, solve_feasibility, verify_outcome


def report(criterion: int, passed: bool, detail: str = ""):
    print(f"[criterion {criterion}] {'PASS' if passed else 'FAIL'} {detail}".rstrip())
    assert passed, detail


# -- shared heavy artifacts -------------------------------------------------


@pytest.fixture(scope="session")
def benchmark_config(benchmark_config_path):
    return load_config(benchmark_config_path)


@pytest.fixture(scope="session")
def certified(benchmark_config):
    """Criterion 5 artifact: the certified benchmark analysis."""
    t0 = time.perf_counter()
    result = analyze(benchmark_config, seed=0)
    return result, time.perf_counter() - t0


# -- criteria ---------------------------------------------------------------


def series_exp(a):
    acc = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, 40):
        term = term @ a / k
        acc = acc + term
    return acc


def series_integral(a, rho):
    # integral of the exponential: rho * sum (A rho)^k / (k+1)!
    acc = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, 40):
        term = term @ (a * rho) / (k + 1)
        acc = acc + term
    return rho * acc


def test_criterion_1_kernel_oracles(benchmark_plant):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mats = [random_stable_matrix(rng, int(rng.integers(1, 9))) for _ in range(100)]
    mats.append(np.asarray(benchmark_plant.a))
    worst = 0.0
    for a in mats:
        t = float(rng.uniform(0.01, 0.3))
        want_e = series_exp(a * t)
        got_e = matexp(a, t)
        worst = max(worst, np.linalg.norm(got_e - want_e)
                    / max(1.0, np.linalg.norm(want_e)))
        want_i = series_integral(a, t)
        got_i = matexp_integral(a, t)
        worst = max(worst, np.linalg.norm(got_i - want_i)
                    / max(1.0, np.linalg.norm(want_i)))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-9 and elapsed < 5.0,
           f"(relative error {worst:.2e}, {elapsed:.2f}s)")


def test_criterion_2_containment(benchmark_plant, benchmark_controller,
                                 benchmark_net):
    t0 = time.perf_counter()
    model = build_polytopic_model(benchmark_plant, benchmark_controller,
                                  benchmark_net, 4, 4)
    rep = verify_containment(model, benchmark_plant, benchmark_controller,
                             benchmark_net, samples=500, seed=2024,
                             residual_tol=1e-8, norm_tol=1e-9)
    elapsed = time.perf_counter() - t0
    report(2, rep.ok and elapsed < 60.0,
           f"(violations {len(rep.violations)}, max block norm "
           f"{rep.max_block_norm:.6f}, max residual {rep.max_residual:.2e}, "
           f"{elapsed:.1f}s)")


def test_criterion_3_tightness_refinement(benchmark_plant, benchmark_controller,
                                          benchmark_net):
    seq = []
    for n in (1, 2, 4, 8):
        model = build_polytopic_model(benchmark_plant, benchmark_controller,
                                      benchmark_net, n, n)
        seq.append(model.varpi)
    non_increasing = all(b <= a * (1.0 + 1e-12) for a, b in zip(seq, seq[1:]))
    report(3, non_increasing and seq[-1] <= seq[1],
           f"(tightness sequence {', '.join(f'{v:.3e}' for v in seq)})")


def test_criterion_4_solver_soundness():
    rng = np.random.default_rng(77)
    slowest = 0.0
    all_ok = True
    for trial in range(10):
        n = int(rng.integers(2, 7))
        system = lyapunov_system(random_schur_stable(rng, n))
        t0 = time.perf_counter()
        out = solve_feasibility(system, SolveOptions(seed=trial))
        slowest = max(slowest, time.perf_counter() - t0)
        ok, _ = verify_outcome(system, out.x, 1e-8)
        all_ok = all_ok and out.feasible and ok
    bad = solve_feasibility(contradictory_system(),
                            SolveOptions(max_iterations=300))
    report(4, all_ok and slowest < 1.0 and bad.status == "notFoundWithinBudget",
           f"(slowest fixture {slowest:.2f}s, contradictory -> {bad.status})")


def test_criterion_5_end_to_end_certificate(certified):
    result, elapsed = certified
    report(5, result.certified and elapsed < 600.0,
           f"(status {result.outcome.status}, margin "
           f"{result.outcome.worst_margin:.3e}, {elapsed:.0f}s)")


def test_criterion_6_tradeoff_trends(tmp_path):
    config = load_config("configs/sweep.yaml")
    t0 = time.perf_counter()
    rows = sweep_tradeoff(config, tmp_path / "sweep.csv", seed=0)
    elapsed = time.perf_counter() - t0
    curve = {(r.gamma2, r.h_mad): r.h_mati_max if r.feasible else 0.0
             for r in rows}
    gammas = sorted(config.sweep.gamma2_values)
    mads = sorted(config.sweep.h_mad_grid)
    slack = 1.0 + config.sweep.rel_tol  # one bisection granule of noise
    good = total = 0
    for g in gammas:
        for d0, d1 in zip(mads, mads[1:]):
            total += 1
            good += curve[(g, d1)] <= curve[(g, d0)] * slack
    for d in mads:
        for g0, g1 in zip(gammas, gammas[1:]):
            total += 1
            good += curve[(g1, d)] * slack >= curve[(g0, d)]
    ideal = max(g for g in gammas if math.isinf(g))
    for g in gammas:
        if math.isinf(g):
            continue
        for d in mads:
            total += 1
            good += curve[(ideal, d)] * slack >= curve[(g, d)]
    frac = good / total
    report(6, frac >= 0.9 and elapsed < 7200.0,
           f"({good}/{total} adjacent comparisons, {elapsed:.0f}s)")


def test_criterion_7_stochastic_validation(benchmark_config, certified):
    result, _ = certified
    assert result.certified, "needs the criterion 5 certificate"
    cert = result.certificate
    x0 = benchmark_config.default_x0()
    stats = run_ensemble(
        benchmark_config.plant, benchmark_config.controller,
        benchmark_config.net, benchmark_config.quantizer,
        x0, runs=200, horizon=500, seed_base=0, confidence=0.99,
    )
    from nqcsbench.sim import check_emsiss_bound, check_hinf_sum

    emsiss = check_emsiss_bound(stats, cert, x0)
    hinf = check_hinf_sum(stats, cert, x0)
    draws = 200 * 500
    sig_a = 3.0 * math.sqrt(0.8 * 0.2 / draws)
    dropouts_ok = (abs(stats.alpha_freq - 0.8) <= sig_a
                   and stats.beta_freq == 1.0)
    run = simulate_run(benchmark_config.plant, benchmark_config.controller,
                       benchmark_config.net, benchmark_config.quantizer,
                       x0, horizon=500, seed=0)
    replay = float(np.max(replay_residuals(
        run, benchmark_config.plant, benchmark_config.controller,
        benchmark_config.net)))
    report(7, emsiss.passed and hinf.passed and dropouts_ok and replay <= 1e-9,
           f"(emsiss {emsiss.passed}, hinf {hinf.passed}, "
           f"alpha_freq {stats.alpha_freq:.4f}, replay {replay:.2e})")


def test_criterion_8_determinism(toy_config_path, tmp_path):
    config = load_config(toy_config_path)
    s1, s2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
    sweep_tradeoff(config, s1, seed=11)
    sweep_tradeoff(config, s2, seed=11)
    sweep_same = s1.read_bytes() == s2.read_bytes()
    d1, d2 = tmp_path / "m1", tmp_path / "m2"
    d1.mkdir()
    d2.mkdir()
    res = analyze(config, seed=11)
    simulate_and_check(config, res.certificate, d1, seed=11, run_id="r")
    simulate_and_check(config, res.certificate, d2, seed=11, run_id="r")
    sim_same = ((d1 / "trace_r.csv").read_bytes() == (d2 / "trace_r.csv").read_bytes()
                and (d1 / "ensemble_r.csv").read_bytes() == (d2 / "ensemble_r.csv").read_bytes())
    report(8, sweep_same and sim_same,
           f"(sweep identical {sweep_same}, simulate identical {sim_same})")
