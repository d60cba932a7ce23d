"""Catalog transcription checks: spot values, data consistency, and the
manufactured-solution residual oracle."""

import numpy as np
import pytest

from rtdg.problems import (RESIDUAL_RTOL, catalog, catalog_names,
                           manufactured_residual)
from rtdg.quadrature import (gauss_legendre_1d, legendre_chebyshev_2d,
                             single_direction)

RNG = np.random.default_rng(20240811)


def default_quad(spec):
    if spec.fixed_directions is not None:
        return single_direction(spec.fixed_directions[0])
    if spec.dim == 1:
        return gauss_legendre_1d(8)
    return legendre_chebyshev_2d(8, 8)


def interior_points(spec, n=60, margin=0.05):
    dom = spec.domain
    if spec.dim == 1:
        return RNG.uniform(dom[0] + margin, dom[1] - margin, (n, 1))
    pts = np.column_stack([
        RNG.uniform(dom[0, 0] + margin, dom[0, 1] - margin, n),
        RNG.uniform(dom[1, 0] + margin, dom[1, 1] - margin, n)])
    if spec.fixed_directions is not None:
        # keep clear of the transported discontinuity line y = (eta/zeta) x
        z, e = spec.fixed_directions[0]
        pts = pts[np.abs(pts[:, 1] - e / z * pts[:, 0]) > 0.08]
    return pts


def test_unknown_name_rejected():
    with pytest.raises(ValueError):
        catalog("no-such-problem")


def test_catalog_lists_all_entries():
    names = catalog_names()
    for required in ["ex1-1d", "ex7-1d", "ex6-1d", "ex1-2d", "ex3-2d",
                     "ex2-2d", "ex4-2d", "ex5-2d", "freestream-1d",
                     "freestream-2d"]:
        assert required in names


def test_ex1_1d_spot_value():
    spec = catalog("ex1-1d")
    val = spec.eval_exact(np.array([[0.0]]), np.array([1.0]), 0.0)
    assert val[0] == pytest.approx(2.0, abs=1e-14)


def test_ex3_2d_zero_below_line():
    spec = catalog("ex3-2d")
    z, e = spec.fixed_directions[0]
    pts = np.array([[0.6, 0.6 * e / z - 0.1]])
    val = spec.eval_exact(pts, spec.fixed_directions[0], 0.05)
    assert val[0] == 0.0


def test_ex5_2d_origin_value():
    spec = catalog("ex5-2d")
    z, e = 0.3, 0.4
    val = spec.eval_exact(np.array([[0.0, 0.0]]), np.array([z, e]), 0.0)
    assert val[0] == pytest.approx(7.0 * (z**2 + e**2), rel=1e-10)


def test_ex6_1d_data():
    spec = catalog("ex6-1d")
    x = np.array([0.1, 0.3, 0.8])
    assert np.allclose(spec.sigma_t(x), [1.0, 900.0, 90.0])
    assert np.allclose(spec.source(x, 0.1, 0.0), [100.0, 1.0, 1000.0])
    g = spec.eval_g(np.array([[0.0], [1.0]]), np.array([0.5]), 0.05)
    assert np.allclose(g, [0.0, 15.1])
    with pytest.raises(ValueError):
        spec.eval_g(np.array([[0.5]]), np.array([0.5]), 0.0)


def test_inflow_only_boundary_data():
    for name in ("ex3-2d", "ex2-2d"):
        spec = catalog(name)
        with pytest.raises(ValueError):
            spec.eval_g(np.array([[1.0, 0.5]]), spec.fixed_directions[0], 0.0)


def test_sigma_ordering_everywhere():
    for name in catalog_names():
        spec = catalog(name)
        pts = interior_points(spec, 200, margin=0.01)
        st = spec.eval_sigma_t(pts)
        assert np.all(st >= spec.sigma_s - 1e-14), name
        assert np.all(st >= 0.0), name


def test_ic_bc_consistent_with_exact():
    """Initial data matches exact at t=0 and boundary data matches the
    exact trace on the inflow boundary, at 100 random samples."""
    for name in catalog_names():
        spec = catalog(name)
        if spec.exact is None:
            continue
        quad = default_quad(spec)
        pts = interior_points(spec, 100, margin=0.01)
        # ex3-2d / ex2-2d print pre-transient initial states: with
        # c = 3e8 the solution forgets them within ~1e-8, and their
        # exact formulas describe the post-transient profile (their
        # boundary data is consistent; initial data is not).
        if name not in ("ex3-2d", "ex2-2d"):
            for m in range(quad.count):
                ic = spec.eval_ic(pts, quad.directions[m])
                ex = spec.eval_exact(pts, quad.directions[m], 0.0)
                assert np.abs(ic - ex).max() < 1e-10 * max(np.abs(ex).max(), 1.0), name

        # inflow-side traces
        dom = np.atleast_2d(spec.domain)
        t = 0.07
        for m in range(quad.count):
            omega = quad.directions[m]
            if spec.dim == 1:
                side_pts = [np.array([[dom[0, 0]]]), np.array([[dom[0, 1]]])]
                normals = [-1.0, 1.0]
                inflow = [omega[0] * nrm < 0 for nrm in normals]
            else:
                ys = RNG.uniform(dom[1, 0] + 1e-3, dom[1, 1] - 1e-3, 25)
                xs = RNG.uniform(dom[0, 0] + 1e-3, dom[0, 1] - 1e-3, 25)
                side_pts = [
                    np.column_stack([xs, np.full(25, dom[1, 0])]),
                    np.column_stack([np.full(25, dom[0, 1]), ys]),
                    np.column_stack([xs, np.full(25, dom[1, 1])]),
                    np.column_stack([np.full(25, dom[0, 0]), ys])]
                nvec = [(0, -1), (1, 0), (0, 1), (-1, 0)]
                inflow = [omega[0] * nx + omega[1] * ny < 0 for nx, ny in nvec]
            for pts_s, is_in in zip(side_pts, inflow):
                if not is_in:
                    continue
                g = spec.eval_g(pts_s, omega, t)
                ex = spec.eval_exact(pts_s, omega, t)
                assert np.abs(g - ex).max() < 1e-10 * max(np.abs(ex).max(), 1.0), \
                    (name, m)


def test_manufactured_residuals_within_thresholds():
    for name in catalog_names():
        spec = catalog(name)
        if spec.exact is None:
            continue
        quad = default_quad(spec)
        pts = interior_points(spec)
        res, scale = manufactured_residual(spec, quad, pts, 0.07)
        assert res / scale <= RESIDUAL_RTOL[name], \
            f"{name}: rel residual {res / scale:.3e}"


def test_ex1_1d_residual_at_quadrature_accuracy():
    spec = catalog("ex1-1d")
    res, scale = manufactured_residual(spec, gauss_legendre_1d(8),
                                       interior_points(spec), 0.05)
    assert res / scale <= 1e-12


def test_ex3_2d_residual_pointwise():
    spec = catalog("ex3-2d")
    res, scale = manufactured_residual(
        spec, single_direction(spec.fixed_directions[0]),
        interior_points(spec), 0.03)
    assert res / scale <= 1e-11


def test_freestream_residual_identity():
    for name in ("freestream-1d", "freestream-2d"):
        spec = catalog(name)
        quad = default_quad(spec)
        pts = interior_points(spec)
        # q == (sigma_t - sigma_s) * a by construction
        res, scale = manufactured_residual(spec, quad, pts, 0.02)
        assert res <= 1e-12 * scale


def test_ex4_2d_scattering_against_adaptive_quadrature():
    """The transcription check that the solver's angular rule cannot do:
    an independent adaptive integral of the scattering term."""
    from scipy.integrate import quad as spquad

    spec = catalog("ex4-2d")
    quad = legendre_chebyshev_2d(8, 8)
    pts = interior_points(spec, 12)
    R, a = 200.0, 10.0

    def scatter(p, t):
        out = np.empty(p.shape[0])
        for i, (x, y) in enumerate(p):
            r2 = x * x + y * y

            def f(mu):
                return a - np.tanh(R * (r2 - np.sqrt(2.0) * abs(mu)))

            brk = min(r2 / np.sqrt(2.0), 1.0)
            val, _ = spquad(f, 0.0, 1.0, points=[brk], limit=200,
                            epsabs=1e-12, epsrel=1e-12)
            out[i] = np.exp(t) * val
        return out

    res, scale = manufactured_residual(spec, quad, pts, 0.05, scatter=scatter)
    assert res / scale <= 1e-9

    # closed-form log-cosh mean agrees with the adaptive integral
    ref = scatter(pts, 0.05)
    an = spec.scatter_mean(pts[:, 0], pts[:, 1], 0.05)
    assert np.abs(ref - an).max() < 1e-9 * np.abs(ref).max()
