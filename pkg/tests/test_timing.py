"""Polygon clipping and timing distribution checks."""

import numpy as np
import pytest

from nqcsbench.errors import ConfigError, DomainError
from nqcsbench.model import TimingRegion
from nqcsbench.timing import (
    PiecewiseTimingDistribution,
    UniformTimingDistribution,
    clip_halfplane,
    make_distribution,
    polygon_area,
)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def test_polygon_area_square_and_triangle():
    assert polygon_area(SQUARE) == pytest.approx(1.0)
    tri = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    assert polygon_area(tri) == pytest.approx(1.0)


def test_clip_halfplane_halves_square():
    # keep a*x + b*y <= c: cut the square along x <= 0.5
    clipped = clip_halfplane(SQUARE, 1.0, 0.0, 0.5)
    assert polygon_area(clipped) == pytest.approx(0.5)
    # a cut entirely outside leaves nothing
    assert len(clip_halfplane(SQUARE, 1.0, 0.0, -1.0)) == 0


def region(h_min=1e-3, h_mati=1e-2, tau_min=1e-4, tau_mad=8e-4):
    # tau_mad < h_min keeps the tau <= h constraint inactive
    return TimingRegion(h_min=h_min, h_mati=h_mati, tau_min=tau_min, tau_mad=tau_mad)


def test_uniform_support_area_rectangle():
    # tau range entirely below h range: support is the full rectangle
    dist = UniformTimingDistribution(region())
    want = (1e-2 - 1e-3) * (8e-4 - 1e-4)
    assert dist.support_area() == pytest.approx(want)


def test_uniform_support_area_cut_by_diagonal():
    # tau_mad above h_mati: the tau <= h constraint bites
    r = TimingRegion(h_min=1e-3, h_mati=4e-3, tau_min=0.0, tau_mad=4e-3)
    dist = UniformTimingDistribution(r)
    rect = (4e-3 - 1e-3) * 4e-3
    cut = 0.5 * (4e-3 - 1e-3) ** 2  # triangle above the diagonal
    assert dist.support_area() == pytest.approx(rect - cut)


def test_uniform_triangle_probabilities_sum_to_one():
    dist = UniformTimingDistribution(region())
    r = dist.region
    mid_h = 0.5 * (r.h_min + r.h_mati)
    quads = [
        np.array([[r.h_min, r.tau_min], [mid_h, r.tau_min],
                  [mid_h, r.tau_mad], [r.h_min, r.tau_mad]]),
        np.array([[mid_h, r.tau_min], [r.h_mati, r.tau_min],
                  [r.h_mati, r.tau_mad], [mid_h, r.tau_mad]]),
    ]
    total = sum(dist.triangle_probability(q) for q in quads)
    assert total == pytest.approx(1.0)


def test_uniform_samples_inside_support():
    dist = UniformTimingDistribution(region())
    rng = np.random.default_rng(3)
    pts = dist.sample(rng, 500)
    assert pts.shape == (500, 2)
    for h, tau in pts:
        assert dist.region.contains(h, tau, slack=1e-12)
        assert tau < h


def test_uniform_sampling_deterministic():
    dist = UniformTimingDistribution(region())
    a = dist.sample(np.random.default_rng(42), 64)
    b = dist.sample(np.random.default_rng(42), 64)
    assert np.array_equal(a, b)


def test_piecewise_reduces_to_uniform():
    r = region()
    grid = PiecewiseTimingDistribution(
        region=r,
        h_edges=np.array([r.h_min, 5e-3, r.h_mati]),
        tau_edges=np.array([r.tau_min, r.tau_mad]),
        weights=np.array([[1.0], [1.0]]),
    )
    uni = UniformTimingDistribution(r)
    tri = np.array([[2e-3, 2e-4], [4e-3, 2e-4], [2e-3, 1e-3]])
    assert grid.triangle_probability(tri) == pytest.approx(uni.triangle_probability(tri))
    assert grid.density(3e-3, 5e-4) == pytest.approx(uni.density(3e-3, 5e-4))


def test_piecewise_weighted_cells():
    r = region()
    grid = PiecewiseTimingDistribution(
        region=r,
        h_edges=np.array([r.h_min, 5.5e-3, r.h_mati]),
        tau_edges=np.array([r.tau_min, r.tau_mad]),
        weights=np.array([[3.0], [1.0]]),
    )
    left = np.array([[r.h_min, r.tau_min], [5.5e-3, r.tau_min],
                     [5.5e-3, r.tau_mad], [r.h_min, r.tau_mad]])
    p_left = grid.triangle_probability(left)
    assert p_left == pytest.approx(3.0 / 4.0)
    rng = np.random.default_rng(11)
    pts = grid.sample(rng, 4000)
    frac = np.mean(pts[:, 0] < 5.5e-3)
    assert abs(frac - 0.75) < 0.03


def test_piecewise_validation():
    r = region()
    with pytest.raises(ConfigError):
        PiecewiseTimingDistribution(region=r, h_edges=np.array([1e-3, 1e-2]),
                                    tau_edges=np.array([1e-4, 2e-3]),
                                    weights=np.array([[-1.0]]))
    with pytest.raises(ConfigError):
        PiecewiseTimingDistribution(region=r, h_edges=np.array([1e-3, 1e-3]),
                                    tau_edges=np.array([1e-4, 2e-3]),
                                    weights=np.array([[1.0]]))


def test_make_distribution_dispatch():
    r = region()
    assert isinstance(make_distribution("uniform", r), UniformTimingDistribution)
    with pytest.raises(DomainError):
        make_distribution("gaussian", r)
