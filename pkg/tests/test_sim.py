"""Event-driven simulator: replay soundness, determinism and bound checks."""

import numpy as np
import pytest

from nqcsbench.errors import DimensionError, DomainError, HorizonTooShortError
from nqcsbench.lmi import LmiCertificate
from nqcsbench.sim import (
    check_emsiss_bound,
    check_hinf_sum,
    replay_residuals,
    run_ensemble,
    simulate_run,
    ultimate_bound_check,
    write_trace_csv,
)

from conftest import make_benchmark_net

X0 = np.array([0.1, -0.2, 0.15, 0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def make_cert(c1=1e6, c2=1e-3, c3=1e4, gamma1=1e9, gamma2=100.0):
    return LmiCertificate(
        p_matrices=(np.eye(10),), scalars={}, margin=-1e-6,
        a1=1.0, a2=10.0, a3=1e-2, a4=10.0, a5=1e-4,
        c1=c1, c2=c2, c3=c3, gamma1=gamma1, gamma2=gamma2,
    )


@pytest.fixture(scope="module")
def short_run(benchmark_plant, benchmark_controller, benchmark_net,
              benchmark_quantizer):
    return simulate_run(benchmark_plant, benchmark_controller, benchmark_net,
                        benchmark_quantizer, X0, horizon=60, seed=7)


def test_replay_residuals_machine_precision(
    short_run, benchmark_plant, benchmark_controller, benchmark_net
):
    res = replay_residuals(short_run, benchmark_plant, benchmark_controller,
                           benchmark_net)
    assert res.shape == (60,)
    assert np.max(res) <= 1e-9


def test_simulation_deterministic(benchmark_plant, benchmark_controller,
                                  benchmark_net, benchmark_quantizer):
    a = simulate_run(benchmark_plant, benchmark_controller, benchmark_net,
                     benchmark_quantizer, X0, horizon=25, seed=3)
    b = simulate_run(benchmark_plant, benchmark_controller, benchmark_net,
                     benchmark_quantizer, X0, horizon=25, seed=3)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.intervals, b.intervals)
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.mus, b.mus)


def test_samples_respect_timing_region(short_run, benchmark_net):
    r = benchmark_net.region
    assert np.all(short_run.intervals >= r.h_min)
    assert np.all(short_run.intervals <= r.h_mati)
    assert np.all(short_run.delays >= r.tau_min)
    assert np.all(short_run.delays <= r.tau_mad)
    assert np.all(short_run.delays < short_run.intervals)


def test_zoom_contracts_on_successful_delivery(
    benchmark_plant, benchmark_controller, benchmark_quantizer
):
    net = make_benchmark_net(alpha_bar=1.0, beta_bar=1.0)
    run = simulate_run(benchmark_plant, benchmark_controller, net,
                       benchmark_quantizer, X0, horizon=20, seed=0)
    # every packet delivered: the quantization parameter contracts each step
    assert np.allclose(run.mus[1:] / run.mus[:-1], 0.6)


def test_dropout_frequency_tracks_probability(
    benchmark_plant, benchmark_controller, benchmark_net, benchmark_quantizer
):
    stats = run_ensemble(benchmark_plant, benchmark_controller, benchmark_net,
                         benchmark_quantizer, X0, runs=6, horizon=120,
                         seed_base=100)
    # alpha_bar = 0.8, beta_bar = 1.0; three-sigma band for 720 draws
    sigma3 = 3.0 * np.sqrt(0.8 * 0.2 / (6 * 120))
    assert abs(stats.alpha_freq - 0.8) <= sigma3
    assert stats.beta_freq == 1.0


def test_ensemble_worker_count_does_not_change_results(
    benchmark_plant, benchmark_controller, benchmark_net, benchmark_quantizer
):
    one = run_ensemble(benchmark_plant, benchmark_controller, benchmark_net,
                       benchmark_quantizer, X0, runs=4, horizon=20,
                       seed_base=5, workers=1)
    two = run_ensemble(benchmark_plant, benchmark_controller, benchmark_net,
                       benchmark_quantizer, X0, runs=4, horizon=20,
                       seed_base=5, workers=2)
    assert np.array_equal(one.mean_sq_state, two.mean_sq_state)
    assert one.sum_sq_output_mean == two.sum_sq_output_mean


def test_trace_csv_header_and_precision(short_run, tmp_path):
    path = tmp_path / "trace.csv"
    write_trace_csv(short_run, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ("k,t,h,tau,sigma,alpha,beta,norm2_x,norm2_eps,norm2_z,"
                        "mu_1,mu_2,saturated")
    assert len(lines) == short_run.horizon + 2
    # round-trip of a float field at 17 significant digits is exact
    h_field = lines[1].split(",")[2]
    assert float(h_field) == short_run.intervals[0]


def test_bound_checks_pass_with_loose_certificate(
    benchmark_plant, benchmark_controller, benchmark_net, benchmark_quantizer
):
    stats = run_ensemble(benchmark_plant, benchmark_controller, benchmark_net,
                         benchmark_quantizer, X0, runs=5, horizon=80,
                         seed_base=0)
    cert = make_cert()
    emsiss = check_emsiss_bound(stats, cert, X0)
    assert emsiss.passed
    ult = ultimate_bound_check(stats, cert, benchmark_quantizer)
    assert ult.passed


def test_emsiss_flags_violations_for_tiny_constants(
    benchmark_plant, benchmark_controller, benchmark_net, benchmark_quantizer
):
    stats = run_ensemble(benchmark_plant, benchmark_controller, benchmark_net,
                         benchmark_quantizer, X0, runs=3, horizon=40,
                         seed_base=0)
    cert = make_cert(c1=1e-12, gamma1=1e-12)
    report = check_emsiss_bound(stats, cert, X0)
    assert not report.passed
    assert report.violations


def test_hinf_check_input_validation(
    benchmark_plant, benchmark_controller, benchmark_net, benchmark_quantizer
):
    stats = run_ensemble(benchmark_plant, benchmark_controller, benchmark_net,
                         benchmark_quantizer, X0, runs=3, horizon=40,
                         seed_base=0)
    with pytest.raises(DomainError):
        check_hinf_sum(stats, make_cert(gamma2=np.inf), X0)
    with pytest.raises(HorizonTooShortError):
        # negligible decay: the extrapolated tail dwarfs the partial sum
        check_hinf_sum(stats, make_cert(c2=1e-12), X0)


def test_simulate_rejects_bad_arguments(
    benchmark_plant, benchmark_controller, benchmark_net, benchmark_quantizer
):
    with pytest.raises(DimensionError):
        simulate_run(benchmark_plant, benchmark_controller, benchmark_net,
                     benchmark_quantizer, np.zeros(3), horizon=5, seed=0)
    with pytest.raises(DomainError):
        simulate_run(benchmark_plant, benchmark_controller, benchmark_net,
                     benchmark_quantizer, X0, horizon=0, seed=0)
