"""Mesh movement as a gradient flow in computational coordinates.

The physical mesh and its per-element metric stay frozen while an
auxiliary computational mesh relaxes the equidistribution/alignment
energy.  The new physical mesh is then read off by piecewise-linear
interpolation: reference vertices are located in the relaxed
computational mesh and mapped through the element-wise affine
correspondence with the frozen physical mesh.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .mesh import MeshError, SimplicialMesh, validate
from .metric import det_sym, vertex_sqrt_det

__all__ = [
    "MeshFunctionalState",
    "MMPDEDiagnostics",
    "energy",
    "g_derivatives",
    "nodal_velocities",
    "integrate_mmpde",
    "new_physical_mesh",
    "move_mesh",
]

from .mesh import CORNER, INTERIOR, SLIDE


@dataclass
class MMPDEDiagnostics:
    substeps: int
    energies: np.ndarray          # accepted energy trace (incl. initial)
    rejected: int
    completed: bool               # reached the end of the slab
    theta: float = 1.0            # accepted fraction of the displacement


@dataclass
class MeshFunctionalState:
    """Frozen physical mesh + metric, evolving computational vertices."""

    phys: SimplicialMesh
    metric: np.ndarray            # (N, d, d), element tensors
    tau: float
    xi: np.ndarray = None         # (Nv, d) computational coordinates
    ref_xi: np.ndarray = None     # frozen reference coordinates

    def __post_init__(self):
        mesh = self.phys
        if self.ref_xi is None:
            self.ref_xi = mesh.vertices.copy()
        if self.xi is None:
            self.xi = self.ref_xi.copy()
        self.metric = np.ascontiguousarray(self.metric, dtype=float)

        # frozen per-element data
        from .dg import _element_frames
        x0, E, einv, det = _element_frames(mesh)
        if np.any(det <= 0):
            raise MeshError("physical mesh has nonpositive elements")
        self._einv = einv
        self._area = mesh.areas()
        self._sdet = np.sqrt(det_sym(self.metric))
        d = mesh.dim
        if d == 1:
            self._minv = 1.0 / self.metric
        else:
            self._minv = np.empty_like(self.metric)
            dt = det_sym(self.metric)
            self._minv[:, 0, 0] = self.metric[:, 1, 1]
            self._minv[:, 1, 1] = self.metric[:, 0, 0]
            self._minv[:, 0, 1] = -self.metric[:, 0, 1]
            self._minv[:, 1, 0] = -self.metric[:, 1, 0]
            self._minv /= dt[:, None, None]
        self._mobility = vertex_sqrt_det(mesh, self.metric) / self.tau
        self._det_ek = det

    def comp_dets(self, xi=None):
        """det E_Kc of the computational elements (2 |K_c| in 2D)."""
        xi = self.xi if xi is None else xi
        xv = xi[self.phys.elements]
        if self.phys.dim == 1:
            return xv[:, 1, 0] - xv[:, 0, 0]
        u = xv[:, 1] - xv[:, 0]
        v = xv[:, 2] - xv[:, 0]
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    def _jacobians(self, xi):
        """J = E_Kc E_K^{-1} per element for computational coords xi."""
        xv = xi[self.phys.elements]
        Ec = np.swapaxes(xv[:, 1:] - xv[:, :1], 1, 2)
        return Ec @ self._einv, Ec


def g_derivatives(J, detJ, M):
    """Derivatives of the per-element energy density.

    dG/dJ   = (4/3) det(M)^(1/2) tr(J M^{-1} J^T) M^{-1} J^T
    dG/ddet = (8/3) det(M)^(-1/2) det(J)

    Works on stacked arrays; M must be SPD.
    """
    J = np.asarray(J, dtype=float)
    M = np.asarray(M, dtype=float)
    detJ = np.asarray(detJ, dtype=float)
    d = J.shape[-1]
    sdet = np.sqrt(det_sym(M))
    if d == 1:
        minv = 1.0 / M
    else:
        minv = np.empty_like(M)
        dm = det_sym(M)
        minv[..., 0, 0] = M[..., 1, 1]
        minv[..., 1, 1] = M[..., 0, 0]
        minv[..., 0, 1] = -M[..., 0, 1]
        minv[..., 1, 0] = -M[..., 1, 0]
        minv /= dm[..., None, None]
    Jt = np.swapaxes(J, -1, -2)
    JMJ = J @ minv @ Jt
    tr = np.trace(JMJ, axis1=-2, axis2=-1) if d == 2 else JMJ[..., 0, 0]
    dGdJ = (4.0 / 3.0) * (sdet * tr)[..., None, None] * (minv @ Jt)
    dGdd = (8.0 / 3.0) * detJ / sdet
    return dGdJ, dGdd


def _g_density(state: MeshFunctionalState, J, detJ):
    d = state.phys.dim
    Jt = np.swapaxes(J, -1, -2)
    JMJ = J @ state._minv @ Jt
    tr = np.trace(JMJ, axis1=-2, axis2=-1) if d == 2 else JMJ[..., 0, 0]
    sdet = state._sdet
    return sdet * ((1.0 / 3.0) * tr**2 + (4.0 / 3.0) * (detJ / sdet) ** 2)


def energy(state: MeshFunctionalState, xi=None) -> float:
    """Riemann-sum mesh energy of the (physical, computational) pair."""
    xi = state.xi if xi is None else xi
    J, Ec = state._jacobians(xi)
    detJ = det_sym(J) if J.shape[-1] == 2 else J[:, 0, 0]
    if np.any(state._det_ek == 0):
        raise MeshError("degenerate physical element")
    return float(state._area @ _g_density(state, J, detJ))


def nodal_velocities(state: MeshFunctionalState, xi=None) -> np.ndarray:
    """dxi/dt for every vertex, with boundary constraints applied.

    Per element the local velocity rows are

        [v_1; v_2] = -E_K^{-1} dG/dJ - dG/ddet (det E_Kc / det E_K) E_Kc^{-1}

    with v_0 = -v_1 - v_2; patch sums are scaled by the vertex mobility
    det(M(x_j))^(1/2)/tau.  Corner vertices are pinned, boundary
    vertices keep only their tangential component.
    """
    mesh = state.phys
    xi = state.xi if xi is None else xi
    d = mesh.dim
    J, Ec = state._jacobians(xi)
    if d == 1:
        detJ = J[:, 0, 0]
        det_ec = Ec[:, 0, 0]
        ecinv = 1.0 / Ec
    else:
        detJ = det_sym(J)
        det_ec = Ec[:, 0, 0] * Ec[:, 1, 1] - Ec[:, 0, 1] * Ec[:, 1, 0]
        if np.any(det_ec == 0):
            raise MeshError("degenerate computational element")
        ecinv = np.empty_like(Ec)
        ecinv[:, 0, 0] = Ec[:, 1, 1]
        ecinv[:, 0, 1] = -Ec[:, 0, 1]
        ecinv[:, 1, 0] = -Ec[:, 1, 0]
        ecinv[:, 1, 1] = Ec[:, 0, 0]
        ecinv /= det_ec[:, None, None]

    dGdJ, dGdd = g_derivatives(J, detJ, state.metric)
    V = -state._einv @ dGdJ - (dGdd * det_ec / state._det_ek)[:, None, None] * ecinv
    v0 = -V.sum(axis=1)
    local = np.concatenate([v0[:, None, :], V], axis=1)   # (N, d+1, d)

    conn = mesh.conn
    out = np.zeros((mesh.n_vertices, d))
    contrib = state._area[conn.patch_elem, None] \
        * local[conn.patch_elem, conn.patch_local]
    vid = np.repeat(np.arange(mesh.n_vertices),
                    np.diff(conn.patch_ptr))
    np.add.at(out, vid, contrib)
    out *= state._mobility[:, None]

    kind = conn.vertex_kind
    out[kind == CORNER] = 0.0
    if d == 2:
        slide = kind == SLIDE
        fixed_axis = 1 - conn.slide_axis[slide]
        out[np.nonzero(slide)[0], fixed_axis] = 0.0
    else:
        out[kind != INTERIOR] = 0.0
    return out


def integrate_mmpde(state: MeshFunctionalState, dt: float,
                    substeps: int = 5, max_substeps: int = 2000,
                    uphill_tol: float = 1e-12,
                    stall_rtol: float = 1e-8) -> MMPDEDiagnostics:
    """Relax the gradient flow to (near) stationarity by explicit Euler
    with an adaptive substep.

    The vertex mobilities det(M)^(1/2)/tau vary by orders of magnitude
    across an adapted mesh, so the flow is stiff: any fixed integration
    window ends mid-transient, with the fast vertices having squeezed
    their computational cells below the equilibrium size.  Mapping such
    a state through the mesh correspondence over-concentrates the
    physical mesh, and the solve/move alternation then ratchets toward
    collapsed cells.  Relaxing each window to stationarity instead makes
    the alternation a stable equidistribution iteration, so integration
    stops on energy stall (three consecutive substeps improving the
    energy by less than ``stall_rtol`` relatively), not on a pseudo-time
    budget; ``dt/substeps`` only seeds the initial substep.  Substeps
    are rescaled by a secant (Barzilai-Borwein) estimate and rejected
    whenever a computational element would lose 90% of its measure,
    invert, or the energy would rise, so every accepted state is valid
    and the energy trace is non-increasing.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    scale = float(np.max(state.phys.hi - state.phys.lo))
    h0 = dt / substeps
    if state.phys.dim == 2:
        conn = state.phys.conn
        energies = np.empty(max_substeps + 1)
        xi = np.ascontiguousarray(state.xi)
        accepted, rejected, stalled = _kernels.mmpde_relax_2d(
            xi, state.phys.elements, np.ascontiguousarray(state._einv),
            state._area, state._sdet, np.ascontiguousarray(state._minv),
            state._det_ek, state._mobility,
            conn.vertex_kind.astype(np.int64),
            conn.slide_axis.astype(np.int64), h0, max_substeps,
            uphill_tol, stall_rtol, scale, energies)
        state.xi = xi
        return MMPDEDiagnostics(accepted, energies[:accepted + 1].copy(),
                                rejected, stalled)
    h_sub = h0
    t_done = 0.0
    E = energy(state)
    energies = [E]
    accepted = rejected = 0
    stalled_for = 0
    dets = state.comp_dets()
    v = nodal_velocities(state)
    while accepted < max_substeps:
        vmax = float(np.abs(v).max())
        if vmax * h_sub < 1e-13 * scale:
            break  # stationary: remaining motion is below resolution
        trial = state.xi + h_sub * v
        new_dets = state.comp_dets(trial)
        ok = bool(np.all(new_dets > 0.1 * dets))
        if ok:
            E_new = energy(state, trial)
            ok = E_new <= E + uphill_tol * max(abs(E), 1.0)
        if not ok:
            h_sub *= 0.5
            rejected += 1
            if h_sub < 1e-15 * dt:
                # pressing an element against the validity bound; the
                # current state is valid, so stop instead of resolving
                # the collapse
                break
            continue
        v_new = nodal_velocities(state, trial)
        s = (trial - state.xi).ravel()
        y = (v - v_new).ravel()
        sy = float(s @ y)
        yy = float(y @ y)
        drop = E - E_new
        state.xi = trial
        dets = new_dets
        E = E_new
        v = v_new
        energies.append(E)
        t_done += h_sub
        accepted += 1
        if drop <= stall_rtol * max(abs(E), 1.0):
            stalled_for += 1
            if stalled_for >= 3:
                break
        else:
            stalled_for = 0
        # secant-scaled next substep, kept within sane bounds
        if sy > 0.0 and yy > 0.0:
            h_sub = max(min(sy / yy, 4.0e3 * h0), 0.25 * h_sub)
        else:
            h_sub = min(2.0 * h_sub, 4.0e3 * h0)
    return MMPDEDiagnostics(accepted, np.array(energies), rejected,
                            accepted < max_substeps)


def _locate_bins(mesh_like_xi, elements, lo, hi):
    """Uniform-bin candidate lists over computational elements."""
    xv = mesh_like_xi[elements]
    N = elements.shape[0]
    nbins = max(int(np.sqrt(N / 2.0)), 1)
    span = np.maximum(hi - lo, 1e-300)
    inv_h = nbins / span
    mins = xv.min(axis=1)
    maxs = xv.max(axis=1)
    b_lo = np.clip(((mins - lo) * inv_h).astype(np.int64), 0, nbins - 1)
    b_hi = np.clip(((maxs - lo) * inv_h).astype(np.int64), 0, nbins - 1)
    counts = np.zeros(nbins * nbins, dtype=np.int64)
    spans_x = b_hi[:, 0] - b_lo[:, 0] + 1
    spans_y = b_hi[:, 1] - b_lo[:, 1] + 1
    for k in range(N):
        for by in range(b_lo[k, 1], b_hi[k, 1] + 1):
            counts[by * nbins + b_lo[k, 0]:by * nbins + b_hi[k, 0] + 1] += 1
    ptr = np.zeros(nbins * nbins + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    elems = np.empty(ptr[-1], dtype=np.int64)
    cursor = ptr[:-1].copy()
    for k in range(N):
        for by in range(b_lo[k, 1], b_hi[k, 1] + 1):
            for bx in range(b_lo[k, 0], b_hi[k, 0] + 1):
                b = by * nbins + bx
                elems[cursor[b]] = k
                cursor[b] += 1
    return ptr, elems, nbins, inv_h


def new_physical_mesh(phys: SimplicialMesh, xi_new: np.ndarray,
                      ref_xi: np.ndarray, tol: float = 1e-12) -> SimplicialMesh:
    """Map reference vertices through the affine correspondence between
    the relaxed computational mesh and the frozen physical mesh."""
    d = phys.dim
    conn = phys.conn
    if d == 1:
        xi = xi_new[:, 0]
        lengths = xi[phys.elements[:, 1]] - xi[phys.elements[:, 0]]
        if np.any(lengths <= 0):
            raise MeshError("computational mesh is tangled")
        order = np.argsort(xi, kind="stable")
        x_new = np.interp(ref_xi[:, 0], xi[order], phys.vertices[order, 0])
        out = x_new[:, None]
    else:
        from .dg import _element_frames
        comp = phys.with_vertices(xi_new)
        x0, E, einv, det = _element_frames(comp)
        if np.any(det <= 0):
            raise MeshError("computational mesh is tangled")
        ptr, elems, nbins, inv_h = _locate_bins(xi_new, phys.elements,
                                                phys.lo, phys.hi)
        found, bary, worst = _kernels.locate_points(
            np.ascontiguousarray(ref_xi), np.ascontiguousarray(x0),
            np.ascontiguousarray(einv), ptr, elems, nbins, nbins,
            phys.lo[0], phys.lo[1], inv_h[0], inv_h[1], tol)
        scale = float(np.max(phys.hi - phys.lo))
        if worst > 1e-9 * scale:
            raise MeshError(f"point location failed: worst containment "
                            f"defect {worst!r}")
        tri = phys.elements[found]                       # (Nv, 3)
        out = np.einsum("jv,jvd->jd", bary, phys.vertices[tri])

    # pin corners exactly, snap sliding vertices back onto their side
    kind = conn.vertex_kind
    out[kind == CORNER] = phys.vertices[kind == CORNER]
    if d == 2:
        slide = np.nonzero(kind == SLIDE)[0]
        fixed_axis = 1 - conn.slide_axis[slide]
        out[slide, fixed_axis] = phys.vertices[slide, fixed_axis]

    result = phys.with_vertices(out)
    rep = validate(result)
    if not rep.ok:
        raise MeshError(f"interpolated mesh invalid: {rep}")
    return result


def move_mesh(phys: SimplicialMesh, metric_tensors: np.ndarray, tau: float,
              dt: float, substeps: int = 5, max_substeps: int = 2000,
              ref_xi: np.ndarray = None):
    """One full mesh-movement step; returns (new_mesh, diagnostics).

    ``ref_xi`` holds the vertices of the fixed reference computational
    mesh (the uniform mesh the run started from).  Passing the current
    vertices of an already adapted mesh instead would compound the
    concentration step after step.

    Validity of the relaxed computational mesh does not by itself make
    the interpolated physical mesh valid when the flow moves far in one
    slab, so an over-aggressive step is shrunk: the computational
    displacement is halved until the interpolated mesh validates
    (theta -> 0 recovers the identity, so this terminates).
    """
    state = MeshFunctionalState(phys, metric_tensors, tau, ref_xi=ref_xi)
    diag = integrate_mmpde(state, dt, substeps, max_substeps)
    displacement = state.xi - state.ref_xi
    theta = 1.0
    for _ in range(40):
        try:
            mesh_new = new_physical_mesh(phys, state.ref_xi
                                         + theta * displacement, state.ref_xi)
            diag.theta = theta
            return mesh_new, diag
        except MeshError:
            theta *= 0.5
    raise MeshError("mesh step remained invalid after displacement backoff")
