"""Direction-set construction against independent quadrature oracles."""

import numpy as np
import pytest

from rtdg.quadrature import (AngularQuadrature, gauss_legendre_1d,
                             legendre_chebyshev_2d, single_direction)


def golub_welsch_legendre(n):
    """Gauss-Legendre nodes/weights from the Jacobi-matrix eigensystem."""
    k = np.arange(1, n)
    beta = k / np.sqrt(4.0 * k * k - 1.0)
    J = np.diag(beta, 1) + np.diag(beta, -1)
    nodes, vecs = np.linalg.eigh(J)
    weights = 2.0 * vecs[0, :] ** 2
    return nodes, weights


def sphere_monomial_integral(a, b, c):
    """(1/4pi) int_S mu^a cos^b(phi) sin^c(phi) dOmega, exactly."""
    if a % 2 or b % 2 or c % 2:
        return 0.0
    from math import gamma
    mu_part = 1.0 / (a + 1)
    phi_part = gamma((b + 1) / 2) * gamma((c + 1) / 2) / (np.pi * gamma((b + c) / 2 + 1))
    return mu_part * phi_part


def test_order2_matches_golub_welsch_and_frozen_values():
    q = gauss_legendre_1d(2)
    nodes, weights = golub_welsch_legendre(2)
    assert np.allclose(q.directions.ravel(), np.sort(nodes), atol=1e-14)
    assert np.allclose(q.weights, weights / 2.0, atol=1e-14)
    assert np.allclose(q.directions.ravel(), [-1 / np.sqrt(3), 1 / np.sqrt(3)],
                       atol=1e-15)
    assert np.allclose(q.weights, [0.5, 0.5], atol=1e-15)


def test_order1_single_root():
    q = gauss_legendre_1d(1)
    assert q.count == 1
    assert q.directions[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert q.weights[0] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("order", [2, 3, 4, 5, 6, 7, 8])
def test_1d_nodes_match_golub_welsch(order):
    q = gauss_legendre_1d(order)
    nodes, weights = golub_welsch_legendre(order)
    assert np.allclose(q.directions.ravel(), nodes, atol=1e-13)
    assert np.allclose(q.weights, weights / 2.0, atol=1e-14)


def test_order8_has_eight_directions():
    q = gauss_legendre_1d(8)
    assert q.count == 8
    assert np.all(np.diff(q.directions.ravel()) > 0)


@pytest.mark.parametrize("n", range(1, 9))
def test_1d_polynomial_exactness(n):
    q = gauss_legendre_1d(n)
    mu = q.directions.ravel()
    assert abs(q.weights.sum() - 1.0) < 1e-14
    for p in range(2 * n):
        exact = 1.0 / (p + 1) if p % 2 == 0 else 0.0  # (1/2) int mu^p dmu
        assert abs(q.weights @ mu**p - exact) < 1e-13


def test_2d_p8t8_counts_and_normalization():
    q = legendre_chebyshev_2d(8, 8)
    assert q.count == 64
    assert abs(q.weights.sum() - 1.0) < 1e-13
    assert np.all((q.directions**2).sum(axis=1) <= 1.0 + 1e-14)


def test_2d_polar1_azimuthal4():
    q = legendre_chebyshev_2d(1, 4)
    assert q.count == 4
    # mu = 0 puts all directions on the unit circle
    assert np.allclose((q.directions**2).sum(axis=1), 1.0, atol=1e-14)
    assert np.allclose(q.weights, 0.25, atol=1e-15)


@pytest.mark.parametrize("n_polar", [2, 4, 8])
def test_2d_second_moment(n_polar):
    q = legendre_chebyshev_2d(n_polar, 8)
    val = q.weights @ (q.directions**2).sum(axis=1)
    assert abs(val - 2.0 / 3.0) < 1e-12


def test_2d_mixed_monomial_exactness():
    n_polar, n_az = 8, 8
    q = legendre_chebyshev_2d(n_polar, n_az)
    zeta, eta = q.directions.T
    mu2 = 1.0 - zeta**2 - eta**2
    mu = np.sqrt(np.maximum(mu2, 0.0))
    sb = np.sqrt(np.maximum(1.0 - mu2, 0.0))
    cphi = np.where(sb > 0, zeta / np.where(sb > 0, sb, 1.0), 0.0)
    sphi = np.where(sb > 0, eta / np.where(sb > 0, sb, 1.0), 0.0)
    # the product rule covers mu-odd symmetry only up to sign; restrict to
    # even a as the measure integrates odd powers to zero anyway
    for a in range(0, 2 * n_polar, 2):
        for b in range(0, n_az):
            for c in range(0, n_az - b):
                if b + c >= n_az:
                    continue
                approx = q.weights @ (mu**a * cphi**b * sphi**c)
                exact = sphere_monomial_integral(a, b, c)
                assert abs(approx - exact) < 1e-12, (a, b, c)


def test_direction_paper_values_present():
    # (0.2578, 0.1068) and (0.7860, 0.3256) are quoted P8-T8 directions
    q = legendre_chebyshev_2d(8, 8)
    for target in [(0.2578, 0.1068), (0.7860, 0.3256)]:
        dist = np.linalg.norm(q.directions - np.array(target), axis=1).min()
        assert dist < 5e-5


def test_single_direction():
    q = single_direction([0.3, 0.5])
    assert q.count == 1 and q.dimension == 2
    assert q.weights[0] == 1.0


def test_invalid_inputs_rejected():
    with pytest.raises(ValueError):
        AngularQuadrature(1, np.array([[0.5], [0.5]]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        AngularQuadrature(1, np.array([[1.5]]), np.array([1.0]))
    with pytest.raises(ValueError):
        AngularQuadrature(2, np.array([[0.9, 0.9]]), np.array([1.0]))
    with pytest.raises(ValueError):
        gauss_legendre_1d(0)
