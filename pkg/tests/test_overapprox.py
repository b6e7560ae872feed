"""Polytopic envelope construction and containment checks."""

import numpy as np
import pytest

from nqcsbench.errors import TightnessNotAchievedError
from nqcsbench.model import build_realization
from nqcsbench.overapprox import (
    build_polytopic_model,
    partition_theta,
    refine_until_tight,
    verify_containment,
)
from nqcsbench.timing import UniformTimingDistribution

from conftest import make_benchmark_net


@pytest.fixture(scope="module")
def coarse_model(benchmark_plant, benchmark_controller, benchmark_net):
    return build_polytopic_model(benchmark_plant, benchmark_controller,
                                 benchmark_net, 1, 1)


def test_partition_tiles_support(benchmark_net):
    dist = benchmark_net.distribution
    part = partition_theta(benchmark_net.region, dist, 3, 2)
    assert part.probabilities.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(part.probabilities >= 0.0)


def test_partition_locate_roundtrip(benchmark_net):
    part = partition_theta(benchmark_net.region, benchmark_net.distribution, 2, 2)
    rng = np.random.default_rng(8)
    pts = benchmark_net.distribution.sample(rng, 50)
    for h, tau in pts:
        hit = part.locate(h, tau)
        assert hit is not None
        m, bary = hit
        tri = part.triangle_coords(m)
        recon = bary @ tri
        assert np.allclose(recon, [h, tau], atol=1e-12)


def test_model_shapes_and_probabilities(coarse_model):
    m = coarse_model
    assert m.node_count == 2
    assert m.a_bar.shape[0] == 2
    assert m.a_bar.shape[2:] == (10, 10)
    assert m.e_bar.shape[2:] == (10, 4)
    assert m.b_bar.shape[0] == 10
    assert m.varpi > 0.0


def test_vertex_matrices_match_exact_loop(
    coarse_model, benchmark_plant, benchmark_controller, benchmark_net
):
    # at a partition vertex the interpolated nominal part plus the fitted
    # uncertainty block must reproduce the exact transition matrices;
    # the sampled check covers interior points as well
    report = verify_containment(coarse_model, benchmark_plant,
                                benchmark_controller, benchmark_net,
                                samples=60, seed=5)
    assert report.ok
    assert report.max_residual <= 1e-8
    assert report.max_block_norm <= 1.0 + 1e-9


def test_tightness_non_increasing_under_refinement(
    benchmark_plant, benchmark_controller, benchmark_net
):
    last = np.inf
    for n in (1, 2):
        model = build_polytopic_model(benchmark_plant, benchmark_controller,
                                      benchmark_net, n, n)
        assert model.varpi <= last + 1e-12
        last = model.varpi


def test_refine_until_tight_stops_or_raises(
    benchmark_plant, benchmark_controller, benchmark_net
):
    model = refine_until_tight(benchmark_plant, benchmark_controller,
                               benchmark_net, 1, 1, varpi_star=10.0,
                               max_refinements=2)
    assert model.varpi <= 10.0
    with pytest.raises(TightnessNotAchievedError):
        refine_until_tight(benchmark_plant, benchmark_controller,
                           benchmark_net, 1, 1, varpi_star=1e-12,
                           max_refinements=1)


def test_error_bounds_shape_and_scaling(coarse_model):
    k = len(coarse_model.decomp.blocks)
    assert coarse_model.deltas.shape == (3, k)
    assert np.all(coarse_model.deltas >= 0.0)
    # the diagonal scaling repeats each family bound over its block size
    sizes = coarse_model.decomp.block_sizes
    want = np.concatenate([np.repeat(coarse_model.deltas[row], sizes)
                           for row in range(3)])
    assert np.allclose(np.diag(coarse_model.u_mat), want)
    assert len(coarse_model.delta_sizes) == 3 * k


def test_mean_and_variance_diagonals(coarse_model, benchmark_net):
    assert np.allclose(
        coarse_model.mean_diag,
        np.concatenate([np.full(2, benchmark_net.alpha_bar),
                        np.full(2, benchmark_net.beta_bar)]),
    )
    assert np.allclose(coarse_model.var_diag,
                       coarse_model.mean_diag * (1.0 - coarse_model.mean_diag))


def test_containment_with_deterministic_network(
    benchmark_plant, benchmark_controller
):
    net = make_benchmark_net(alpha_bar=1.0, beta_bar=1.0, h_mati=4e-3)
    model = build_polytopic_model(benchmark_plant, benchmark_controller, net, 1, 1)
    report = verify_containment(model, benchmark_plant, benchmark_controller,
                                net, samples=40, seed=1)
    assert report.ok
