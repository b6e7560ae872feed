"""Shared fixtures: the two-node benchmark loop and small helpers."""

import math
import pathlib

import numpy as np
import pytest

from nqcsbench.model import (
    ControllerModel,
    NetworkConfig,
    PlantModel,
    ProtocolSpec,
    QuantizerConfig,
    TimingRegion,
)
from nqcsbench.timing import UniformTimingDistribution

REPO = pathlib.Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def benchmark_plant():
    return PlantModel(
        a=[[1.380, -0.208, 6.715, -5.676],
           [-0.581, 4.290, 0.0, 0.675],
           [1.067, 4.273, -6.654, 5.893],
           [0.048, 4.273, 1.343, -2.104]],
        b=[[0.0, 0.0], [5.679, 0.0], [1.136, -3.146], [1.136, 0.0]],
        c=[[1.0, 0.0, 1.0, -1.0], [0.0, 1.0, 0.0, 0.0]],
    )


@pytest.fixture(scope="session")
def benchmark_controller():
    return ControllerModel(
        a=np.zeros((2, 2)),
        b=[[0.0, 1.0], [1.0, 0.0]],
        c=[[-2.0, 0.0], [0.0, 8.0]],
        d=[[0.0, -2.0], [5.0, 0.0]],
    )


def make_benchmark_net(h_mati=5e-3, tau_mad=1e-3, alpha_bar=0.8, beta_bar=1.0,
                       protocol_kind="tod", h_min=1e-3, tau_min=1e-4):
    region = TimingRegion(h_min=h_min, h_mati=h_mati, tau_min=tau_min, tau_mad=tau_mad)
    return NetworkConfig(
        gamma_y=(np.array([1.0, 0.0]), np.array([0.0, 1.0])),
        gamma_u=(np.array([1.0, 1.0]), np.array([1.0, 1.0])),
        region=region,
        distribution=UniformTimingDistribution(region),
        alpha_bar=alpha_bar,
        beta_bar=beta_bar,
        protocol=ProtocolSpec(kind=protocol_kind),
        u_direct=True,
    )


@pytest.fixture(scope="session")
def benchmark_net():
    return make_benchmark_net()


@pytest.fixture(scope="session")
def benchmark_quantizer():
    return QuantizerConfig(
        range_=[40.0, 40.0],
        error_bound=[0.8, 0.8],
        dead_zone=[1e-6, 1e-6],
        zoom=[0.6, 0.6],
        mu0=[1.0, 1.0],
    )


@pytest.fixture(scope="session")
def toy_config_path():
    return REPO / "configs" / "toy.yaml"


@pytest.fixture(scope="session")
def benchmark_config_path():
    return REPO / "configs" / "benchmark.yaml"


def random_stable_matrix(rng, n, radius=0.95):
    """Random real matrix with spectral abscissa pushed below zero."""
    m = rng.standard_normal((n, n))
    shift = max(np.real(np.linalg.eigvals(m)).max(), 0.0)
    return m - (shift + (1.0 - radius)) * np.eye(n)


def assert_gamma2_consistent(cert):
    assert cert.gamma2 == math.inf or cert.gamma2 >= cert.a4 + cert.a5 - 1e-9
