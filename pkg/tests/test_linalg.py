"""Kernel checks against independent series and quadrature oracles."""

import numpy as np
import pytest
import scipy.integrate

from nqcsbench.errors import DimensionError, DomainError
from nqcsbench.linalg import (
    KernelConfig,
    matexp,
    matexp_integral,
    real_block_decompose,
    symmetric_eigen,
)

from conftest import random_stable_matrix


def series_exp(a, t, terms=60):
    """Plain Taylor series oracle, adequate for well-scaled arguments."""
    m = np.asarray(a, dtype=float) * t
    acc = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for k in range(1, terms):
        term = term @ m / k
        acc = acc + term
    return acc


def quadrature_integral(a, rho):
    n = a.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = scipy.integrate.quad(
                lambda s, i=i, j=j: matexp(a, s)[i, j], 0.0, rho, limit=200
            )[0]
    return out


def test_matexp_identity_and_zero():
    assert np.allclose(matexp(np.zeros((3, 3))), np.eye(3))
    a = np.diag([1.0, -2.0])
    assert np.allclose(matexp(a, 0.0), np.eye(2))


def test_matexp_diagonal_exact():
    d = np.diag([0.3, -1.2, 2.5])
    expected = np.diag(np.exp([0.3, -1.2, 2.5]))
    assert np.allclose(matexp(d), expected, rtol=1e-13)


def test_matexp_matches_series_random():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = int(rng.integers(1, 9))
        a = random_stable_matrix(rng, n)
        t = float(rng.uniform(0.0, 0.5))
        got = matexp(a, t)
        want = series_exp(a, t)
        assert np.linalg.norm(got - want) <= 1e-9 * max(1.0, np.linalg.norm(want))


def test_matexp_group_property():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((5, 5))
    full = matexp(a, 0.7)
    split = matexp(a, 0.3) @ matexp(a, 0.4)
    assert np.allclose(full, split, rtol=1e-10, atol=1e-12)


def test_matexp_integral_scalar():
    a = np.array([[2.0]])
    rho = 0.4
    want = (np.exp(2.0 * rho) - 1.0) / 2.0
    assert abs(matexp_integral(a, rho)[0, 0] - want) < 1e-12


def test_matexp_integral_singular_matrix():
    # nilpotent generator: integral has an exact polynomial value
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    rho = 0.8
    want = np.array([[rho, rho**2 / 2.0], [0.0, rho]])
    assert np.allclose(matexp_integral(a, rho), want, rtol=1e-12)


def test_matexp_integral_matches_quadrature():
    rng = np.random.default_rng(23)
    for _ in range(5):
        n = int(rng.integers(2, 5))
        a = random_stable_matrix(rng, n)
        rho = float(rng.uniform(0.05, 0.3))
        got = matexp_integral(a, rho)
        want = quadrature_integral(a, rho)
        assert np.linalg.norm(got - want) <= 1e-9 * max(1.0, np.linalg.norm(want))


def test_matexp_rejects_bad_input():
    with pytest.raises(DimensionError):
        matexp(np.zeros((2, 3)))
    with pytest.raises(DomainError):
        matexp(np.array([[np.nan]]))
    with pytest.raises(DomainError):
        matexp_integral(np.eye(2), -0.1)


def test_symmetric_eigen_roundtrip():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((6, 6))
    s = m + m.T
    w, v = symmetric_eigen(s)
    assert np.all(np.diff(w) >= 0.0)
    assert np.allclose(v @ np.diag(w) @ v.T, s, atol=1e-10)
    with pytest.raises(DomainError):
        symmetric_eigen(rng.standard_normal((4, 4)) + 10.0 * np.eye(4))


def test_block_decompose_semisimple():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((6, 6))
    dec = real_block_decompose(a)
    assert np.allclose(dec.reconstruct(), a, atol=1e-7 * np.linalg.norm(a))
    assert all(k in ("real", "pair", "bidiagonal", "triangular") for k in dec.kinds)


def test_block_decompose_defective():
    # one 3-chain at eigenvalue 2; rounding splits the triple eigenvalue by
    # about eps**(1/3), so the cluster tolerance must sit above that
    j = np.array([[2.0, 1.0, 0.0], [0.0, 2.0, 1.0], [0.0, 0.0, 2.0]])
    rng = np.random.default_rng(4)
    t, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    a = t @ j @ t.T
    dec = real_block_decompose(a, KernelConfig(cluster_tol=1e-4))
    assert dec.kinds == ["bidiagonal"]
    assert np.allclose(dec.reconstruct(), a, atol=1e-6 * np.linalg.norm(a))


def test_block_decompose_exponential_consistency():
    rng = np.random.default_rng(31)
    a = random_stable_matrix(rng, 5)
    dec = real_block_decompose(a)
    lhs = matexp(a, 0.21)
    d = dec.block_diagonal()
    rhs = dec.transform @ matexp(d, 0.21) @ np.linalg.inv(dec.transform)
    assert np.allclose(lhs, rhs, atol=1e-8 * np.linalg.norm(lhs))
