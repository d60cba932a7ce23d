"""Numba kernels: the source-iteration sweep and point location.

Everything here operates on flat, preassembled arrays so that the hot
loops compile to tight machine code.  The sweep updates the coefficient
array in place, which is exactly the "newest available value" rule of
the iteration: upwind neighbours and already-swept directions enter at
the new iterate, everything else at the old one.
"""

import numpy as np
from numba import njit

# status codes returned by si_solve
OK, CAP_EXCEEDED, NOT_FINITE, DIVERGING = 0, 1, 2, 3


@njit(cache=True)
def _solve_dense(A, b, u):
    """Gaussian elimination with partial pivoting; destroys A and b."""
    n = A.shape[0]
    for col in range(n):
        piv = col
        mx = abs(A[col, col])
        for r in range(col + 1, n):
            a = abs(A[r, col])
            if a > mx:
                mx = a
                piv = r
        if mx == 0.0:
            return False
        if piv != col:
            for cc in range(n):
                tmp = A[col, cc]
                A[col, cc] = A[piv, cc]
                A[piv, cc] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        inv = 1.0 / A[col, col]
        for r in range(col + 1, n):
            f = A[r, col] * inv
            if f != 0.0:
                for cc in range(col + 1, n):
                    A[r, cc] -= f * A[col, cc]
                b[r] -= f * b[col]
                A[r, col] = 0.0
    for r in range(n - 1, -1, -1):
        s = b[r]
        for cc in range(r + 1, n):
            s -= A[r, cc] * u[cc]
        u[r] = s / A[r, r]
    return True


@njit(cache=True)
def si_solve(coef, bq, sigs, Adt, Dx, Dy, zetas, etas, wdir, orders,
             tr, nx, ny, wedge, pin, nb, nbe, bmap, gvals,
             use_corr, jacobi, tol, max_iters, deltas):
    """Run source iteration until the sup-norm update drops below tol.

    Returns (status, n_iters, bad_element, bad_direction).  ``coef`` is
    modified in place; ``deltas[:n_iters]`` holds the per-iteration
    update norms.
    """
    NA, N, L = coef.shape
    nE = nx.shape[1]
    nqe = wedge.shape[2]

    # running scattering moments  S[k, p] = sum_m w_m coef[m, k, p]
    S = np.zeros((N, L))
    for m in range(NA):
        for k in range(N):
            for p in range(L):
                S[k, p] += wdir[m] * coef[m, k, p]

    A = np.empty((L, L))
    b = np.empty(L)
    u = np.empty(L)
    Sf = np.empty((N, L))

    it = 0
    prev = 1.0e300
    grow = 0
    while it < max_iters:
        delta = 0.0
        if jacobi:
            for k in range(N):
                for p in range(L):
                    Sf[k, p] = S[k, p]
        for m in range(NA):
            zz = zetas[m]
            ee = etas[m]
            for io in range(N):
                k = orders[m, io]
                for q in range(L):
                    for p in range(L):
                        A[q, p] = Adt[k, q, p] - zz * Dx[k, q, p] - ee * Dy[k, q, p]
                for p in range(L):
                    if jacobi:
                        b[p] = bq[m, k, p] + sigs[k] * Sf[k, p]
                    else:
                        b[p] = bq[m, k, p] + sigs[k] * S[k, p]
                for e in range(nE):
                    on = zz * nx[k, e] + ee * ny[k, e]
                    nbk = nb[k, e]
                    for g in range(nqe):
                        s = on - pin[k, e, g]
                        if use_corr:
                            outflow = s >= 0.0
                        else:
                            outflow = on >= 0.0
                        w = wedge[k, e, g]
                        if outflow:
                            for q in range(L):
                                wq = w * s * tr[e, g, q]
                                for p in range(L):
                                    A[q, p] += wq * tr[e, g, p]
                        else:
                            if nbk >= 0:
                                ne = nbe[k, e]
                                ge = nqe - 1 - g
                                ext = 0.0
                                for p in range(L):
                                    ext += tr[ne, ge, p] * coef[m, nbk, p]
                            else:
                                ext = gvals[m, bmap[k, e], g]
                            for q in range(L):
                                b[q] -= w * s * tr[e, g, q] * ext
                if not _solve_dense(A, b, u):
                    return NOT_FINITE, it, k, m
                d = 0.0
                for p in range(L):
                    if not np.isfinite(u[p]):
                        return NOT_FINITE, it, k, m
                    dd = abs(u[p] - coef[m, k, p])
                    if dd > d:
                        d = dd
                if d > delta:
                    delta = d
                if not jacobi:
                    for p in range(L):
                        S[k, p] += wdir[m] * (u[p] - coef[m, k, p])
                for p in range(L):
                    coef[m, k, p] = u[p]
        if jacobi:
            for k in range(N):
                for p in range(L):
                    S[k, p] = 0.0
            for m in range(NA):
                for k in range(N):
                    for p in range(L):
                        S[k, p] += wdir[m] * coef[m, k, p]
        deltas[it] = delta
        it += 1
        if delta <= tol:
            return OK, it, -1, -1
        if delta > prev * (1.0 + 1e-14):
            grow += 1
        else:
            grow = 0
        if grow >= 5:
            return DIVERGING, it, -1, -1
        prev = delta
    return CAP_EXCEEDED, it, -1, -1


@njit(cache=True)
def locate_points(pts, x0, einv, bin_ptr, bin_elems, nx_bins, ny_bins,
                  lo_x, lo_y, inv_hx, inv_hy, tol):
    """Find containing triangles by binned barycentric tests.

    Falls back to the nearest element (largest minimum barycentric
    coordinate) when a point is outside every candidate by more than
    ``tol``; the second return flags how far outside the best match was.
    """
    npts = pts.shape[0]
    elems = np.full(npts, -1, dtype=np.int64)
    bary = np.zeros((npts, 3))
    worst = 0.0
    for i in range(npts):
        px = pts[i, 0]
        py = pts[i, 1]
        bx = int((px - lo_x) * inv_hx)
        by = int((py - lo_y) * inv_hy)
        if bx < 0:
            bx = 0
        if bx >= nx_bins:
            bx = nx_bins - 1
        if by < 0:
            by = 0
        if by >= ny_bins:
            by = ny_bins - 1
        bidx = by * nx_bins + bx
        best = -1.0e300
        best_k = -1
        b1b = 0.0
        b2b = 0.0
        found = False
        for jj in range(bin_ptr[bidx], bin_ptr[bidx + 1]):
            k = bin_elems[jj]
            dx = px - x0[k, 0]
            dy = py - x0[k, 1]
            b1 = einv[k, 0, 0] * dx + einv[k, 0, 1] * dy
            b2 = einv[k, 1, 0] * dx + einv[k, 1, 1] * dy
            b0 = 1.0 - b1 - b2
            mn = min(b0, min(b1, b2))
            if mn >= -tol:
                elems[i] = k
                bary[i, 0] = b0
                bary[i, 1] = b1
                bary[i, 2] = b2
                found = True
                break
            if mn > best:
                best = mn
                best_k = k
                b1b = b1
                b2b = b2
        if not found:
            # global scan (rare: point escaped its bin's candidates)
            nelem = x0.shape[0]
            for k in range(nelem):
                dx = px - x0[k, 0]
                dy = py - x0[k, 1]
                b1 = einv[k, 0, 0] * dx + einv[k, 0, 1] * dy
                b2 = einv[k, 1, 0] * dx + einv[k, 1, 1] * dy
                b0 = 1.0 - b1 - b2
                mn = min(b0, min(b1, b2))
                if mn > best:
                    best = mn
                    best_k = k
                    b1b = b1
                    b2b = b2
                if mn >= -tol:
                    break
            elems[i] = best_k
            bary[i, 0] = 1.0 - b1b - b2b
            bary[i, 1] = b1b
            bary[i, 2] = b2b
            if -best > worst:
                worst = -best
        # else: accepted within tol
    return elems, bary, worst


@njit(cache=True)
def mmpde_relax_2d(xi, elements, einv, area, sdet, minv, det_ek, mobility,
                   vertex_kind, slide_axis, h0, max_substeps, uphill_tol,
                   stall_rtol, scale, energies):
    """Adaptive-substep relaxation of the 2D mesh energy in place.

    Returns (accepted, rejected, stalled) where ``stalled`` means the
    energy-stall or stationarity break fired (as opposed to the substep
    cap).  ``energies[:accepted + 1]`` receives the monotone trace.
    """
    N = elements.shape[0]
    Nv = xi.shape[0]
    v = np.zeros((Nv, 2))
    vnew = np.zeros((Nv, 2))
    trial = np.empty((Nv, 2))
    dets = np.empty(N)
    new_dets = np.empty(N)

    def _energy(x):
        tot = 0.0
        for k in range(N):
            i0, i1, i2 = elements[k, 0], elements[k, 1], elements[k, 2]
            e00 = x[i1, 0] - x[i0, 0]
            e10 = x[i1, 1] - x[i0, 1]
            e01 = x[i2, 0] - x[i0, 0]
            e11 = x[i2, 1] - x[i0, 1]
            j00 = e00 * einv[k, 0, 0] + e01 * einv[k, 1, 0]
            j01 = e00 * einv[k, 0, 1] + e01 * einv[k, 1, 1]
            j10 = e10 * einv[k, 0, 0] + e11 * einv[k, 1, 0]
            j11 = e10 * einv[k, 0, 1] + e11 * einv[k, 1, 1]
            detj = j00 * j11 - j01 * j10
            # tr(J Minv J^T)
            a = minv[k, 0, 0]
            b = minv[k, 0, 1]
            c = minv[k, 1, 1]
            tr = (j00 * (a * j00 + b * j01) + j01 * (b * j00 + c * j01)
                  + j10 * (a * j10 + b * j11) + j11 * (b * j10 + c * j11))
            s = sdet[k]
            tot += area[k] * (s * tr * tr / 3.0 + 4.0 / 3.0 * detj * detj / s)
        return tot

    def _velocity(x, out):
        for j in range(Nv):
            out[j, 0] = 0.0
            out[j, 1] = 0.0
        for k in range(N):
            i0, i1, i2 = elements[k, 0], elements[k, 1], elements[k, 2]
            e00 = x[i1, 0] - x[i0, 0]
            e10 = x[i1, 1] - x[i0, 1]
            e01 = x[i2, 0] - x[i0, 0]
            e11 = x[i2, 1] - x[i0, 1]
            j00 = e00 * einv[k, 0, 0] + e01 * einv[k, 1, 0]
            j01 = e00 * einv[k, 0, 1] + e01 * einv[k, 1, 1]
            j10 = e10 * einv[k, 0, 0] + e11 * einv[k, 1, 0]
            j11 = e10 * einv[k, 0, 1] + e11 * einv[k, 1, 1]
            detj = j00 * j11 - j01 * j10
            det_ec = e00 * e11 - e01 * e10
            a = minv[k, 0, 0]
            b = minv[k, 0, 1]
            c = minv[k, 1, 1]
            # W = Minv J^T
            w00 = a * j00 + b * j01
            w01 = a * j10 + b * j11
            w10 = b * j00 + c * j01
            w11 = b * j10 + c * j11
            tr = j00 * w00 + j01 * w10 + j10 * w01 + j11 * w11
            s = sdet[k]
            f = 4.0 / 3.0 * s * tr
            g00 = f * w00
            g01 = f * w01
            g10 = f * w10
            g11 = f * w11
            dgdd = 8.0 / 3.0 * detj / s
            # Ec inverse (needs det_ec != 0; guarded by the caller)
            inv = 1.0 / det_ec
            c00 = e11 * inv
            c01 = -e01 * inv
            c10 = -e10 * inv
            c11 = e00 * inv
            coef = dgdd * det_ec / det_ek[k]
            # rows v1, v2 = -einv @ dGdJ - coef * ecinv
            v1x = -(einv[k, 0, 0] * g00 + einv[k, 0, 1] * g10) - coef * c00
            v1y = -(einv[k, 0, 0] * g01 + einv[k, 0, 1] * g11) - coef * c01
            v2x = -(einv[k, 1, 0] * g00 + einv[k, 1, 1] * g10) - coef * c10
            v2y = -(einv[k, 1, 0] * g01 + einv[k, 1, 1] * g11) - coef * c11
            v0x = -v1x - v2x
            v0y = -v1y - v2y
            ak = area[k]
            out[i0, 0] += ak * v0x
            out[i0, 1] += ak * v0y
            out[i1, 0] += ak * v1x
            out[i1, 1] += ak * v1y
            out[i2, 0] += ak * v2x
            out[i2, 1] += ak * v2y
        for j in range(Nv):
            kind = vertex_kind[j]
            if kind == 2:
                out[j, 0] = 0.0
                out[j, 1] = 0.0
            else:
                out[j, 0] *= mobility[j]
                out[j, 1] *= mobility[j]
                if kind == 1:
                    out[j, 1 - slide_axis[j]] = 0.0

    def _dets(x, out):
        for k in range(N):
            i0, i1, i2 = elements[k, 0], elements[k, 1], elements[k, 2]
            out[k] = ((x[i1, 0] - x[i0, 0]) * (x[i2, 1] - x[i0, 1])
                      - (x[i1, 1] - x[i0, 1]) * (x[i2, 0] - x[i0, 0]))

    E = _energy(xi)
    energies[0] = E
    _dets(xi, dets)
    _velocity(xi, v)
    h = h0
    accepted = 0
    rejected = 0
    stalled_for = 0
    while accepted < max_substeps:
        vmax = 0.0
        for j in range(Nv):
            a = abs(v[j, 0])
            if a > vmax:
                vmax = a
            a = abs(v[j, 1])
            if a > vmax:
                vmax = a
        if vmax * h < 1e-13 * scale:
            return accepted, rejected, True
        for j in range(Nv):
            trial[j, 0] = xi[j, 0] + h * v[j, 0]
            trial[j, 1] = xi[j, 1] + h * v[j, 1]
        _dets(trial, new_dets)
        ok = True
        for k in range(N):
            if new_dets[k] <= 0.1 * dets[k]:
                ok = False
                break
        E_new = E
        if ok:
            E_new = _energy(trial)
            ok = E_new <= E + uphill_tol * max(abs(E), 1.0)
        if not ok:
            h *= 0.5
            rejected += 1
            if h < 1e-15 * h0:
                return accepted, rejected, True
            continue
        _velocity(trial, vnew)
        sy = 0.0
        yy = 0.0
        for j in range(Nv):
            sx = trial[j, 0] - xi[j, 0]
            sy_ = trial[j, 1] - xi[j, 1]
            yx = v[j, 0] - vnew[j, 0]
            yy_ = v[j, 1] - vnew[j, 1]
            sy += sx * yx + sy_ * yy_
            yy += yx * yx + yy_ * yy_
        drop = E - E_new
        for j in range(Nv):
            xi[j, 0] = trial[j, 0]
            xi[j, 1] = trial[j, 1]
            v[j, 0] = vnew[j, 0]
            v[j, 1] = vnew[j, 1]
        for k in range(N):
            dets[k] = new_dets[k]
        E = E_new
        accepted += 1
        energies[accepted] = E
        if drop <= stall_rtol * max(abs(E), 1.0):
            stalled_for += 1
            if stalled_for >= 3:
                return accepted, rejected, True
        else:
            stalled_for = 0
        if sy > 0.0 and yy > 0.0:
            bb = sy / yy
            lo = 0.25 * h
            hi = 4.0e3 * h0
            if bb < lo:
                bb = lo
            if bb > hi:
                bb = hi
            h = bb
        else:
            h = min(2.0 * h, 4.0e3 * h0)
    return accepted, rejected, False
