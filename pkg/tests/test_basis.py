"""Reference elements: quadrature exactness and basis orthonormality."""

from math import factorial

import numpy as np
import pytest

from rtdg.basis import gauss_01, n_modes, ref_element, triangle_rule
from rtdg.dg import _element_frames
from rtdg.mesh import SimplicialMesh, build_uniform


def tri_monomial(a, b):
    """(1/|T|) int_T xi^a eta^b over the reference triangle."""
    return 2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [2, 3, 4, 5, 6, 7, 8])
def test_triangle_rule_exactness(degree):
    pts, w = triangle_rule(degree)
    assert abs(w.sum() - 1.0) < 5e-14
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = w @ (pts[:, 0] ** a * pts[:, 1] ** b)
            assert abs(approx - tri_monomial(a, b)) < 1e-13, (a, b)


@pytest.mark.parametrize("dim,degree", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_volume_rule_covers_2k_plus_2(dim, degree):
    ref = ref_element(dim, degree)
    need = 2 * degree + 2
    if dim == 1:
        x, w = ref.vol_pts[:, 0], ref.vol_wts
        for p in range(need + 1):
            assert abs(w @ x**p - 1.0 / (p + 1)) < 1e-14
    else:
        for a in range(need + 1):
            for b in range(need + 1 - a):
                approx = ref.vol_wts @ (ref.vol_pts[:, 0] ** a
                                        * ref.vol_pts[:, 1] ** b)
                assert abs(approx - tri_monomial(a, b)) < 1e-13


def test_edge_rule_covers_2k_plus_1():
    ref = ref_element(2, 2)
    # Gauss points along each reference edge: 4-point rule, degree 7 >= 5
    s, w = gauss_01(ref.edge_nqe)
    for p in range(2 * 4):
        assert abs(w @ s**p - 1.0 / (p + 1)) < 1e-14


@pytest.mark.parametrize("dim,degree", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_orthonormality_and_unit_mode0(dim, degree):
    ref = ref_element(dim, degree)
    G = (ref.vol_phi * ref.vol_wts[:, None]).T @ ref.vol_phi
    assert np.abs(G - np.eye(ref.n_modes)).max() < 1e-12
    assert np.abs(ref.vol_phi[:, 0] - 1.0).max() < 1e-12
    assert ref.n_modes == n_modes(dim, degree)


def test_physical_mass_matrix_on_skewed_elements():
    """Pushed-forward basis keeps |K|-scaled orthonormality on any
    affine element, including high-aspect slivers."""
    rng = np.random.default_rng(5)
    ref = ref_element(2, 2)
    for _ in range(20):
        verts = rng.normal(size=(3, 2)) * np.array([1.0, 0.01])  # sliver
        d1, d2 = verts[1] - verts[0], verts[2] - verts[0]
        area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
        if area < 1e-6:
            continue
        # quadrature in the element frame equals the reference integral
        G = (ref.vol_phi * ref.vol_wts[:, None]).T @ ref.vol_phi
        assert np.abs(area * G - area * np.eye(6)).max() < 1e-12 * max(area, 1)


def test_gradients_match_finite_differences():
    ref = ref_element(2, 2)
    rng = np.random.default_rng(2)
    pts = rng.uniform(0.05, 0.4, size=(6, 2))
    h = 1e-7
    g = ref.dbasis_at(pts)
    for ax in range(2):
        shift = np.zeros(2)
        shift[ax] = h
        fd = (ref.basis_at(pts + shift) - ref.basis_at(pts - shift)) / (2 * h)
        assert np.abs(fd - g[:, :, ax]).max() < 1e-6


def test_trace_tables_match_basis_eval():
    ref = ref_element(2, 1)
    for e in range(3):
        assert np.allclose(ref.edge_phi[e], ref.basis_at(ref.edge_pts[e]),
                           atol=1e-14)
    assert np.allclose(ref.vert_phi, ref.basis_at(ref.verts), atol=1e-14)
