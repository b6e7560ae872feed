"""Closed-loop model assembly, quantizer, hold and scheduling checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nqcsbench.errors import ConfigError, DomainError
from nqcsbench.model import (
    ProtocolSpec,
    QuantizerConfig,
    TimingRegion,
    build_realization,
    coupling_matrices,
    quantize,
    schedule_node,
    system_dims,
    update_received,
    update_zoom,
)

from conftest import make_benchmark_net


def test_coupling_matrices_inverse(benchmark_plant, benchmark_controller):
    _, _, d, d_inv = coupling_matrices(benchmark_plant, benchmark_controller)
    assert np.allclose(d @ d_inv, np.eye(d.shape[0]))
    # unit lower triangular
    assert np.allclose(np.diag(d), 1.0)
    assert np.allclose(np.triu(d, 1), 0.0)


def test_system_dims(benchmark_plant, benchmark_controller):
    dims = system_dims(benchmark_plant, benchmark_controller)
    assert (dims.n_p, dims.n_c, dims.n_y, dims.n_u) == (4, 2, 2, 2)
    assert dims.n_pc == 6 and dims.n_z == 4 and dims.n_x == 10


def test_realization_shapes(benchmark_plant, benchmark_controller, benchmark_net):
    real = build_realization(benchmark_plant, benchmark_controller, benchmark_net,
                             sigma=1, h=3e-3, tau=5e-4)
    assert real.a_mat.shape == (10, 10)
    assert real.b_mat.shape == (10, 4)
    assert real.h_mat.shape == (4, 10)


def test_realization_node_selector_kills_foreign_columns(
    benchmark_plant, benchmark_controller, benchmark_net
):
    # node 1 transmits only the first output component: the second output
    # column of the stochastic input matrix must vanish
    real = build_realization(benchmark_plant, benchmark_controller, benchmark_net,
                             sigma=1, h=3e-3, tau=5e-4)
    assert np.allclose(real.b_mat[:, 1], 0.0)
    real2 = build_realization(benchmark_plant, benchmark_controller, benchmark_net,
                              sigma=2, h=3e-3, tau=5e-4)
    assert np.allclose(real2.b_mat[:, 0], 0.0)


def test_step_matrix_vanishes_without_dropouts(
    benchmark_plant, benchmark_controller
):
    net = make_benchmark_net(alpha_bar=1.0, beta_bar=1.0)
    real = build_realization(benchmark_plant, benchmark_controller, net,
                             sigma=1, h=2e-3, tau=2e-4)
    assert np.allclose(real.step_matrix(1, 1), 0.0)
    assert np.allclose(real.var_diag, 0.0)


def test_realization_rejects_bad_timing(
    benchmark_plant, benchmark_controller, benchmark_net
):
    with pytest.raises(DomainError):
        build_realization(benchmark_plant, benchmark_controller, benchmark_net,
                          sigma=1, h=2e-3, tau=3e-3)
    with pytest.raises(DomainError):
        build_realization(benchmark_plant, benchmark_controller, benchmark_net,
                          sigma=1, h=1.0, tau=1e-4)


def test_timing_region_contains():
    region = TimingRegion(h_min=1e-3, h_mati=1e-2, tau_min=1e-4, tau_mad=2e-3)
    assert region.contains(5e-3, 1e-3)
    assert not region.contains(5e-2, 1e-3)
    assert not region.contains(5e-3, 5e-3)
    with pytest.raises(ConfigError):
        TimingRegion(h_min=2e-2, h_mati=1e-2, tau_min=0.0, tau_mad=1e-3)


QUANT = QuantizerConfig(range_=[10.0], error_bound=[0.8], dead_zone=[1e-6],
                        zoom=[0.6], mu0=[1.0])


def test_quantize_dead_zone_and_error_bound():
    idx = [np.array([0, 1])]
    q = QuantizerConfig(range_=[10.0], error_bound=[0.8], dead_zone=[1e-3],
                        zoom=[0.6], mu0=[1.0])
    out, err, sat = quantize(q, np.array([1.0]), np.array([1e-4, -1e-4]), idx)
    assert np.all(out == 0.0)
    out, err, sat = quantize(q, np.array([1.0]), np.array([3.0, -2.0]), idx)
    assert np.linalg.norm(err) <= 0.8 + 1e-12
    assert not sat[0]


def test_quantize_saturation_flagged_not_clipped():
    idx = [np.array([0])]
    out, err, sat = quantize(QUANT, np.array([1.0]), np.array([55.0]), idx)
    assert sat[0]
    # lattice error still within the scaled bound even past the range
    assert abs(err[0]) <= 0.8 + 1e-12


@settings(max_examples=200, deadline=None)
@given(
    z=st.lists(st.floats(-30.0, 30.0, allow_nan=False), min_size=2, max_size=2),
    mu=st.floats(1e-3, 4.0),
)
def test_quantize_error_bound_property(z, mu):
    idx = [np.array([0, 1])]
    q = QuantizerConfig(range_=[40.0], error_bound=[0.8], dead_zone=[1e-9],
                        zoom=[0.6], mu0=[1.0])
    _, err, _ = quantize(q, np.array([mu]), np.array(z), idx)
    assert np.linalg.norm(err) <= 0.8 * mu * (1.0 + 1e-9)


def test_quantize_rejects_bad_mu():
    with pytest.raises(DomainError):
        quantize(QUANT, np.array([0.0]), np.array([1.0]), [np.array([0])])


def test_update_received():
    held = np.array([1.0, 2.0])
    fresh = np.array([5.0, 6.0])
    sel = np.array([1.0, 0.0])
    assert np.allclose(update_received(held, fresh, sel, 1), [5.0, 2.0])
    assert np.allclose(update_received(held, fresh, sel, 0), held)


def test_update_zoom_only_on_success():
    mu = np.array([1.0])
    assert np.allclose(update_zoom(mu, 1, 1, QUANT), [0.6])
    assert np.allclose(update_zoom(mu, 0, 1, QUANT), [1.0])
    assert np.allclose(update_zoom(mu, 1, 0, QUANT), [1.0])


def test_schedule_round_robin_and_periodic():
    rr = ProtocolSpec(kind="round_robin")
    assert [schedule_node(rr, 3, k) for k in range(6)] == [1, 2, 3, 1, 2, 3]
    per = ProtocolSpec(kind="periodic", sequence=(2, 1, 2))
    assert [schedule_node(per, 2, k) for k in range(4)] == [2, 1, 2, 2]


def test_schedule_tod_picks_largest_error(benchmark_net):
    e = np.array([4.0, 0.1, 0.0, 0.0])
    eps = np.zeros(4)
    sigma = schedule_node(benchmark_net.protocol, 2, 0, e_vec=e, eps_bar=eps,
                          net=benchmark_net)
    assert sigma == 1
    e2 = np.array([0.1, 4.0, 0.0, 0.0])
    assert schedule_node(benchmark_net.protocol, 2, 0, e_vec=e2, eps_bar=eps,
                         net=benchmark_net) == 2


def test_schedule_tod_tie_smallest_index(benchmark_net):
    e = np.zeros(4)
    eps = np.zeros(4)
    assert schedule_node(benchmark_net.protocol, 2, 5, e_vec=e, eps_bar=eps,
                         net=benchmark_net) == 1


def test_protocol_validation():
    with pytest.raises(ConfigError):
        ProtocolSpec(kind="nonsense")
    with pytest.raises(ConfigError):
        ProtocolSpec(kind="periodic", sequence=(1, 3)).validate(2)
    with pytest.raises(ConfigError):
        ProtocolSpec(kind="periodic", sequence=(1, 1)).validate(2)
