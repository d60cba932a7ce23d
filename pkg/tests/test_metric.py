"""Metric construction: recovery oracles, regularization, intersection."""

import numpy as np
import pytest

from rtdg.dg import project
from rtdg.mesh import build_uniform
from rtdg.metric import (HessianRecovery, absolute_value, combine_directions,
                         det_sym, intersect, is_spd, metric_from_hessian,
                         metric_from_solution, smooth, solve_alpha,
                         vertex_sqrt_det)

RNG = np.random.default_rng(777)


def random_spd(n, jitter=0.05):
    Q = RNG.normal(size=(n, 2, 2))
    return Q @ np.swapaxes(Q, -1, -2) + jitter * np.eye(2)


# -- Hessian recovery ---------------------------------------------------------

def test_recovery_quadratic_within_ten_percent_away_from_boundary():
    mesh = build_uniform([[0, 1], [0, 1]], 12)
    rec = HessianRecovery(mesh, 1)
    c = mesh.centroids()
    inner = np.all((c > 0.25) & (c < 0.75), axis=1)
    f = project(lambda x, y: x**2 + y**2, mesh, 1)
    H, defic = rec.recover(f, 0)
    assert not defic[inner].any()
    assert np.abs(H[inner, 0, 0] - 2.0).max() < 0.2
    assert np.abs(H[inner, 1, 1] - 2.0).max() < 0.2
    assert np.abs(H[inner, 0, 1]).max() < 0.2


def test_recovery_xy_off_diagonal():
    mesh = build_uniform([[0, 1], [0, 1]], 12)
    rec = HessianRecovery(mesh, 1)
    c = mesh.centroids()
    inner = np.all((c > 0.25) & (c < 0.75), axis=1)
    f = project(lambda x, y: x * y, mesh, 1)
    H, _ = rec.recover(f, 0)
    assert np.abs(H[inner, 0, 1] - 1.0).max() < 0.1
    assert np.abs(H[inner, 0, 0]).max() < 0.1


def test_recovery_constant_and_linear_zero():
    mesh = build_uniform([[0, 1], [0, 1]], 8)
    rec = HessianRecovery(mesh, 1)
    for fun in (lambda x, y: 3.0 + 0 * x, lambda x, y: 2 * x - 0.3 * y):
        f = project(fun, mesh, 1)
        H, _ = rec.recover(f, 0)
        assert np.abs(H).max() < 1e-10


def test_recovery_1d():
    mesh = build_uniform([0, 1], 24)
    rec = HessianRecovery(mesh, 2)
    f = project(lambda x: np.sin(2 * x), mesh, 2)
    H, defic = rec.recover(f, 0)
    xc = mesh.centroids()[:, 0]
    assert not defic.any()
    # one-sided boundary stencils carry the largest error; 10% bound
    assert np.abs(H[:, 0, 0] + 4 * np.sin(2 * xc)).max() < 0.10 * 4
    inner = (xc > 0.15) & (xc < 0.85)
    assert np.abs(H[inner, 0, 0] + 4 * np.sin(2 * xc[inner])).max() < 0.05 * 4


# -- eigenvalue absolute value ------------------------------------------------

def test_absolute_value_examples():
    H = np.array([[[-3.0, 0.0], [0.0, 2.0]]])
    assert np.allclose(absolute_value(H)[0], np.diag([3.0, 2.0]))
    assert np.abs(absolute_value(np.zeros((1, 2, 2)))).max() == 0.0
    H = np.array([[[0.0, 1.0], [1.0, 0.0]]])
    assert np.allclose(absolute_value(H)[0], np.eye(2), atol=1e-14)


def test_absolute_value_matches_eigh():
    H = RNG.normal(size=(200, 2, 2))
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    got = absolute_value(H)
    lam, Q = np.linalg.eigh(H)
    want = np.einsum("nij,nj,nkj->nik", Q, np.abs(lam), Q)
    assert np.abs(got - want).max() < 1e-12


# -- regularization parameter -------------------------------------------------

def test_alpha_closed_form_single_element():
    h = 2.0
    aH = np.array([[[h, 0.0], [0.0, h]]])
    alpha, clamped = solve_alpha(aH, np.array([1.0]))
    expected = h / (2.0**1.5 * h - 1.0)
    assert not clamped
    assert abs(alpha - expected) / expected < 1e-8


def test_alpha_clamps_for_flat_fields():
    alpha, clamped = solve_alpha(np.zeros((5, 2, 2)), np.full(5, 0.2))
    assert clamped and alpha == 1.0
    M = metric_from_hessian(np.zeros((5, 2, 2)), alpha)
    assert np.abs(M - np.eye(2)).max() < 1e-14


def test_alpha_equation_residual():
    for trial in range(5):
        aH = absolute_value(random_spd(40, jitter=0.0) * 30.0)
        areas = RNG.uniform(0.5, 1.5, 40) / 40.0
        alpha, clamped = solve_alpha(aH, areas)
        if clamped:
            continue
        e = (1.0 - 2.0 / 6.0) / 2.0
        lam = np.linalg.eigvalsh(aH)
        lhs = areas @ np.prod(1.0 + lam / alpha, axis=-1) ** e
        rhs = 2.0 * areas @ np.prod(lam, axis=-1) ** (1.0 / 3.0)
        assert abs(lhs - rhs) / rhs < 1e-8


def test_alpha_1d_exponents():
    # 1D uses det(M)^(1/2) = (1 + |H|/alpha)^(5/12)
    aH = np.full((3, 1, 1), 50.0)
    areas = np.full(3, 1.0 / 3.0)
    alpha, clamped = solve_alpha(aH, areas)
    assert not clamped
    lhs = np.sum(areas * (1.0 + 50.0 / alpha) ** (5.0 / 12.0))
    rhs = 2.0 * np.sum(areas * 50.0 ** (1.0 / 3.0))
    assert abs(lhs - rhs) / rhs < 1e-8


# -- metric tensor ------------------------------------------------------------

def test_metric_from_hessian_examples():
    M = metric_from_hessian(np.array([[[3.0, 0.0], [0.0, 0.0]]]), 1.0)
    assert np.allclose(M[0], 4.0 ** (-1 / 6) * np.diag([4.0, 1.0]), atol=1e-14)
    h = 2.5
    M = metric_from_hessian(np.array([[[h, 0.0], [0.0, h]]]), 1.0)
    assert np.allclose(M[0], (1 + h) ** (2.0 / 3.0) * np.eye(2), atol=1e-12)


def test_metric_determinant_identity():
    aH = absolute_value(RNG.normal(size=(100, 2, 2))
                        + np.swapaxes(RNG.normal(size=(100, 2, 2)), -1, -2))
    alpha = 0.37
    M = metric_from_hessian(aH, alpha)
    lhs = np.sqrt(det_sym(M))
    rhs = det_sym(aH / alpha + np.eye(2)) ** (1.0 / 3.0)
    assert np.abs(lhs - rhs).max() < 1e-12
    assert np.all(is_spd(M))


# -- intersection -------------------------------------------------------------

def test_intersect_identity_and_frozen_example():
    eye = np.eye(2)[None]
    assert np.allclose(intersect(eye, eye), eye, atol=1e-15)
    A = np.array([[[4.0, 0.0], [0.0, 1.0]]])
    B = np.array([[[1.0, 0.0], [0.0, 4.0]]])
    assert np.allclose(intersect(A, B)[0], np.diag([4.0, 4.0]), atol=1e-12)


def test_intersect_idempotent():
    A = random_spd(500)
    assert np.abs(intersect(A, A) - A).max() < 1e-12 * np.abs(A).max()


def test_intersect_containment_sampling_oracle():
    """Unit ellipse of A^B fits inside both operands' ellipses: sampled
    boundary points satisfy v'Av <= 1 and v'Bv <= 1 (up to 1e-9)."""
    n = 1000
    A, B = random_spd(n), random_spd(n)
    C = intersect(A, B)
    theta = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    u = np.stack([np.cos(theta), np.sin(theta)])
    L = np.linalg.cholesky(C)
    v = np.linalg.solve(np.swapaxes(L, -1, -2), np.broadcast_to(u, (n, 2, 16)))
    for X in (A, B):
        val = np.einsum("ndk,nde,nek->nk", v, X, v)
        assert val.max() <= 1.0 + 1e-9


def test_intersect_rejects_non_spd():
    A = np.array([[[1.0, 0.0], [0.0, -1.0]]])
    with pytest.raises(ValueError):
        intersect(A, np.eye(2)[None])


def test_combine_directions():
    A = random_spd(50)
    assert np.abs(combine_directions([A, A, A]) - A).max() < 1e-11
    assert np.abs(combine_directions([A]) - A).max() == 0.0


def test_combine_two_layer_metrics_keeps_both():
    # two directions demanding resolution at different x-locations
    n = 40
    x = np.linspace(0, 1, n)
    big = 200.0
    MA = np.tile(np.eye(2), (n, 1, 1))
    MB = np.tile(np.eye(2), (n, 1, 1))
    MA[np.abs(x - 0.3) < 0.05, 0, 0] = big
    MB[np.abs(x - 0.7) < 0.05, 0, 0] = big
    C = combine_directions([MA, MB])
    for loc in (0.3, 0.7):
        sel = np.abs(x - loc) < 0.05
        assert np.all(C[sel, 0, 0] >= big * (1 - 1e-9))
    # containment against each constituent
    for X in (MA, MB):
        lam = np.linalg.eigvalsh(np.linalg.solve(C, X))
        assert lam.max() <= 1.0 + 1e-9


def test_1d_intersection_is_max():
    a = np.array([[[2.0]]])
    b = np.array([[[5.0]]])
    assert intersect(a, b)[0, 0, 0] == pytest.approx(5.0, abs=1e-13)
    assert intersect(b, a)[0, 0, 0] == pytest.approx(5.0, abs=1e-13)


# -- smoothing ----------------------------------------------------------------

def test_smooth_zero_passes_and_uniform_fixed_point():
    mesh = build_uniform([[0, 1], [0, 1]], 4)
    M = random_spd(mesh.n_elements)
    assert np.abs(smooth(mesh, M, 0) - M).max() == 0.0
    U = np.tile(np.diag([2.0, 3.0]), (mesh.n_elements, 1, 1))
    assert np.abs(smooth(mesh, U, 4) - U).max() < 1e-13


def test_smooth_decays_spike_and_preserves_spd():
    mesh = build_uniform([[0, 1], [0, 1]], 6)
    M = np.tile(np.eye(2), (mesh.n_elements, 1, 1))
    M[20] = np.diag([100.0, 100.0])
    prev = 100.0
    cur = M
    # the spike never grows and decays strictly once the local plateau
    # (spike averaged into its own patch) starts diffusing outward
    for p in range(5):
        cur = smooth(mesh, cur, 1)
        assert cur[20, 0, 0] <= prev + 1e-12
        prev = cur[20, 0, 0]
        assert np.all(is_spd(cur))
    assert prev < 100.0 / 4.0


# -- full pipeline ------------------------------------------------------------

def test_pipeline_produces_spd_metric():
    from rtdg.dg import project_initial
    from rtdg.problems import catalog
    from rtdg.quadrature import gauss_legendre_1d

    spec = catalog("ex7-1d")
    mesh = build_uniform(spec.domain, 40)
    quad = gauss_legendre_1d(8)
    f = project_initial(spec, quad, mesh, 2)
    rec = HessianRecovery(mesh, 2)
    mf = metric_from_solution(f, rec, smoothing_passes=2)
    assert np.all(is_spd(mf.tensors))
    assert mf.alphas.shape == (8,)
    vs = vertex_sqrt_det(mesh, mf.tensors)
    assert np.all(vs > 0)
