"""DG spatial discretization of the direction-collocated transport
system on a moving mesh.

One implicit Euler step works entirely on the end-of-slab mesh:
the modal basis, quadrature geometry and upwind structure are built
there, the mesh velocity enters the weak form through the per-element
affine interpolant of the vertex velocities, and the previous-step
modal coefficients feed the time term directly (no remapping between
meshes -- element identity across the slab is the ALE correspondence).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .basis import RefElement, ref_element
from .mesh import MovingMesh, SimplicialMesh
from .problems import ProblemSpec
from .quadrature import AngularQuadrature

__all__ = [
    "DGField",
    "SolverOptions",
    "StepDiagnostics",
    "SolverError",
    "StepSystem",
    "project",
    "project_initial",
    "build_step_system",
    "classify_edges",
    "sweep_order",
    "assemble_local",
    "source_iteration_step",
    "advance_step",
]

# 2D boundary sides 0..3 = y-lo, x-hi, y-hi, x-lo; 1D sides 0..1 = x-lo, x-hi.
SIDE_NORMALS_2D = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
SIDE_NORMALS_1D = np.array([[-1.0, 0.0], [1.0, 0.0]])


class SolverError(RuntimeError):
    pass


@dataclass
class SolverOptions:
    si_tol: float = 1e-12
    si_max_iters: int = 200
    sweep: str = "centroid"            # or "topological"
    si_mode: str = "gauss_seidel"      # or "jacobi"
    corrected_classification: bool = False
    # start the fixed-point iteration from the time-extrapolated field
    # (same fixed point, fewer iterations on slowly varying problems)
    si_predictor: bool = True


@dataclass
class StepDiagnostics:
    n_iters: int
    deltas: np.ndarray
    status: int = _kernels.OK


@dataclass
class DGField:
    """Per-direction modal expansions on one mesh at one time."""

    degree: int
    mesh: SimplicialMesh
    coeffs: np.ndarray      # (n_dirs, n_elements, n_modes)
    time: float = 0.0

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=float)
        ref = ref_element(self.mesh.dim, self.degree)
        expected = (self.coeffs.shape[0], self.mesh.n_elements, ref.n_modes)
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient array shape {self.coeffs.shape}, "
                             f"expected {expected}")

    @property
    def n_dirs(self):
        return self.coeffs.shape[0]

    @property
    def ref(self) -> RefElement:
        return ref_element(self.mesh.dim, self.degree)

    def _ref_coords(self, elem, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        xv = self.mesh.vertices[self.mesh.elements[elem]]
        E = (xv[1:] - xv[0]).T
        return np.linalg.solve(E, (pts - xv[0]).T).T

    def evaluate(self, m: int, elem: int, pts, tol: float = 1e-10):
        """Modal sum at physical points, which must lie in the element."""
        xi = self._ref_coords(elem, pts)
        lam = np.column_stack([1.0 - xi.sum(axis=1), xi])
        if np.any(lam < -tol) or np.any(lam > 1.0 + tol):
            raise ValueError(f"point outside element {elem} "
                             f"(barycentric range [{lam.min()}, {lam.max()}])")
        return self.ref.basis_at(xi) @ self.coeffs[m, elem]

    def cell_means(self):
        """Per-direction element averages (mode 0, since phi_0 == 1)."""
        return self.coeffs[:, :, 0].copy()

    def centroid_values(self):
        return self.coeffs @ self.ref.centroid_phi

    def copy(self):
        return DGField(self.degree, self.mesh, self.coeffs.copy(), self.time)


# ---------------------------------------------------------------------------
# geometry and projection
# ---------------------------------------------------------------------------

def _element_frames(mesh: SimplicialMesh):
    """Affine frames: first vertex, edge matrix, inverse, measure."""
    xv = mesh.element_vertices()
    x0 = xv[:, 0]
    E = np.swapaxes(xv[:, 1:] - x0[:, None, :], 1, 2)  # columns are edges
    if mesh.dim == 1:
        det = E[:, 0, 0]
        einv = (1.0 / det)[:, None, None]
    else:
        det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
        einv = np.empty_like(E)
        einv[:, 0, 0] = E[:, 1, 1]
        einv[:, 0, 1] = -E[:, 0, 1]
        einv[:, 1, 0] = -E[:, 1, 0]
        einv[:, 1, 1] = E[:, 0, 0]
        einv /= det[:, None, None]
    return x0, E, einv, det


def _physical_points(x0, E, ref_pts):
    """Map reference points through x = x0 + E xi, batched over elements."""
    return x0[:, None, :] + np.einsum("nde,qe->nqd", E, np.atleast_2d(ref_pts))


def project(f, mesh: SimplicialMesh, degree: int) -> DGField:
    """Element-wise L2 projection of a spatial function (one direction)."""
    ref = ref_element(mesh.dim, degree)
    x0, E, _, _ = _element_frames(mesh)
    pts = _physical_points(x0, E, ref.vol_pts)
    flat = pts.reshape(-1, mesh.dim)
    vals = np.asarray(f(*flat.T), dtype=float)
    vals = np.broadcast_to(vals, (flat.shape[0],)).reshape(pts.shape[:2])
    coeffs = np.einsum("nq,q,qp->np", vals, ref.vol_wts, ref.vol_phi)
    return DGField(degree, mesh, coeffs[None, :, :])


def project_initial(spec: ProblemSpec, quad: AngularQuadrature,
                    mesh: SimplicialMesh, degree: int) -> DGField:
    """Project the initial data for every direction."""
    ref = ref_element(mesh.dim, degree)
    x0, E, _, _ = _element_frames(mesh)
    pts = _physical_points(x0, E, ref.vol_pts)
    flat = pts.reshape(-1, mesh.dim)
    coeffs = np.empty((quad.count, mesh.n_elements, ref.n_modes))
    for m in range(quad.count):
        vals = spec.eval_ic(flat, quad.directions[m]).reshape(pts.shape[:2])
        coeffs[m] = np.einsum("nq,q,qp->np", vals, ref.vol_wts, ref.vol_phi)
    return DGField(degree, mesh, coeffs, time=0.0)


# ---------------------------------------------------------------------------
# step system assembly
# ---------------------------------------------------------------------------

@dataclass
class StepSystem:
    """Everything the sweep kernel needs for one implicit step."""

    mesh: SimplicialMesh
    ref: RefElement
    quad: AngularQuadrature
    dt: float
    t_new: float
    c: float
    area: np.ndarray
    x0: np.ndarray
    einv: np.ndarray
    Adt: np.ndarray
    Dx: np.ndarray
    Dy: np.ndarray
    nx: np.ndarray
    ny: np.ndarray
    wedge: np.ndarray
    pin: np.ndarray
    nb: np.ndarray
    nbe: np.ndarray
    bmap: np.ndarray
    gvals: np.ndarray
    bq: np.ndarray
    sigs: np.ndarray
    orders: np.ndarray
    zetas: np.ndarray
    etas: np.ndarray
    vol_pts: np.ndarray = None
    edge_pts: np.ndarray = None


def _edge_geometry(mesh, x0, E):
    """Outward normals and physical edge quadrature weights."""
    N = mesh.n_elements
    if mesh.dim == 1:
        nx = np.tile(np.array([-1.0, 1.0]), (N, 1))
        ny = np.zeros_like(nx)
        wedge = np.ones((N, 2, 1))
        return nx, ny, wedge
    xv = mesh.element_vertices()
    nx = np.empty((N, 3))
    ny = np.empty((N, 3))
    wedge = np.empty((N, 3, 4))
    ref = ref_element(2, 1)
    for e, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
        t = xv[:, b] - xv[:, a]
        ln = np.hypot(t[:, 0], t[:, 1])
        nx[:, e] = t[:, 1] / ln
        ny[:, e] = -t[:, 0] / ln
        wedge[:, e, :] = ln[:, None] * ref.edge_wts[None, :]
    return nx, ny, wedge


def sweep_order(mesh: SimplicialMesh, omega, mode: str = "centroid",
                centroids=None) -> np.ndarray:
    """Element ordering that puts upwind neighbours first.

    "centroid" sorts by the centroid projection onto the direction
    (cycle-free by construction, ties broken by element index);
    "topological" resolves the edge dependency DAG exactly and breaks
    cycles by the same projection.
    """
    omega = np.asarray(omega, dtype=float).ravel()
    if centroids is None:
        centroids = mesh.centroids()
    key = centroids @ omega[:mesh.dim]
    order = np.argsort(key, kind="stable")
    if mode == "centroid":
        return order.astype(np.int64)
    if mode != "topological":
        raise ValueError(f"unknown sweep mode {mode!r}")

    import heapq

    x0, E, einv, _ = _element_frames(mesh)
    nx, ny, _ = _edge_geometry(mesh, x0, E)
    zz = omega[0]
    ee = omega[1] if omega.size > 1 else 0.0
    on = zz * nx + ee * ny
    conn = mesh.conn
    N = mesh.n_elements
    indeg = np.zeros(N, dtype=np.int64)
    for k in range(N):
        for e in range(nx.shape[1]):
            nbk = conn.neighbors[k, e]
            if nbk >= 0 and on[k, e] < 0.0:
                indeg[k] += 1
    heap = [(key[k], k) for k in range(N) if indeg[k] == 0]
    heapq.heapify(heap)
    out = np.empty(N, dtype=np.int64)
    done = np.zeros(N, dtype=bool)
    pos = 0
    remaining = list(np.argsort(key, kind="stable"))
    while pos < N:
        if not heap:
            # dependency cycle: release the most-upwind remaining element
            for k in remaining:
                if not done[k] and indeg[k] > 0:
                    indeg[k] = 0
                    heapq.heappush(heap, (key[k], k))
                    break
        _, k = heapq.heappop(heap)
        if done[k]:
            continue
        done[k] = True
        out[pos] = k
        pos += 1
        for e in range(nx.shape[1]):
            nbk = conn.neighbors[k, e]
            if nbk >= 0 and not done[nbk] and on[k, e] >= 0.0:
                indeg[nbk] -= 1
                if indeg[nbk] <= 0:
                    heapq.heappush(heap, (key[nbk], nbk))
    return out


def classify_edges(system: StepSystem, m: int, corrected: Optional[bool] = None):
    """Per-element edge partition for direction m: +1 outflow, -1 inflow.

    With the velocity correction the classification is per quadrature
    node, so the returned array has shape (N, n_edges, nqe); without it
    the sign of Omega . n is constant per edge, shape (N, n_edges).
    """
    if corrected is None:
        corrected = False
    on = system.zetas[m] * system.nx + system.etas[m] * system.ny
    if not corrected:
        return np.where(on >= 0.0, 1, -1)
    s = on[:, :, None] - system.pin
    return np.where(s >= 0.0, 1, -1)


def build_step_system(moving: MovingMesh, spec: ProblemSpec,
                      quad: AngularQuadrature, field_old: DGField,
                      dt: float, t_new: float,
                      opts: SolverOptions = None) -> StepSystem:
    """Assemble all direction-independent blocks for one implicit step."""
    opts = opts or SolverOptions()
    mesh = moving.mesh_new
    degree = field_old.degree
    ref = ref_element(mesh.dim, degree)
    L = ref.n_modes
    N = mesh.n_elements
    c = spec.c

    x0, E, einv, _ = _element_frames(mesh)
    area = mesh.areas()
    if np.any(area <= 0):
        raise SolverError("step mesh has nonpositive element measures")

    vol_pts = _physical_points(x0, E, ref.vol_pts)           # (N, nqv, d)
    grad_phi = np.einsum("njd,qlj->nqld", einv, ref.vol_dphi)  # physical grads
    wvol = area[:, None] * ref.vol_wts[None, :]

    # mesh velocity interpolant and its (constant) divergence
    velv = moving.velocities[mesh.elements]                  # (N, d+1, d)
    pi_vol = np.einsum("qv,nvd->nqd", ref.vol_bary, velv)
    W = np.swapaxes(velv[:, 1:] - velv[:, :1], 1, 2)
    div_pi = np.einsum("nij,nji->n", W, einv)

    sig_vals = spec.eval_sigma_t(vol_pts.reshape(-1, mesh.dim)).reshape(N, -1)

    mass_diag = np.eye(L)
    Adt = np.einsum("nq,nq,qa,qb->nab", wvol, sig_vals, ref.vol_phi, ref.vol_phi)
    Adt += (area / (c * dt))[:, None, None] * mass_diag
    pdotg = np.einsum("nqd,nqad->nqa", pi_vol, grad_phi)
    Adt += np.einsum("nq,nqa,qb->nab", wvol, pdotg, ref.vol_phi) / c
    Adt += (div_pi * area / c)[:, None, None] * mass_diag

    Dx = np.einsum("nq,nqa,qb->nab", wvol, grad_phi[:, :, :, 0], ref.vol_phi)
    if mesh.dim == 2:
        Dy = np.einsum("nq,nqa,qb->nab", wvol, grad_phi[:, :, :, 1], ref.vol_phi)
    else:
        Dy = np.zeros_like(Dx)

    nx, ny, wedge = _edge_geometry(mesh, x0, E)
    nE, nqe = wedge.shape[1], wedge.shape[2]
    edge_pts = np.empty((N, nE, nqe, mesh.dim))
    pin = np.empty((N, nE, nqe))
    for e in range(nE):
        epts = _physical_points(x0, E, ref.edge_pts[e])
        edge_pts[:, e] = epts
        pi_e = np.einsum("qv,nvd->nqd", ref.edge_bary[e], velv)
        pin[:, e] = (pi_e[:, :, 0] * nx[:, e, None]
                     + (pi_e[:, :, 1] * ny[:, e, None] if mesh.dim == 2 else 0.0)) / c

    conn = mesh.conn
    nb = conn.neighbors
    nbe = conn.neighbor_edge

    # boundary edge table and inflow data
    bpos = np.nonzero(conn.boundary_side >= 0)
    NB = bpos[0].size
    bmap = np.full((N, nE), -1, dtype=np.int64)
    bmap[bpos] = np.arange(NB)
    bside = conn.boundary_side[bpos]
    bedge_pts = edge_pts[bpos]                              # (NB, nqe, d)

    zetas, etas = quad.omega_components()
    side_normals = SIDE_NORMALS_2D if mesh.dim == 2 else SIDE_NORMALS_1D
    gvals = np.zeros((quad.count, max(NB, 1), nqe))
    for m in range(quad.count):
        omega2 = np.array([zetas[m], etas[m]])
        for side in range(side_normals.shape[0]):
            if omega2 @ side_normals[side] >= 0.0:
                continue  # outflow side: no boundary data needed
            mask = bside == side
            if not np.any(mask):
                continue
            pts = bedge_pts[mask].reshape(-1, mesh.dim)
            vals = spec.eval_g(pts, quad.directions[m], t_new)
            gvals[m][mask] = vals.reshape(-1, nqe)

    # right-hand side: old time level + emission source
    bq = np.empty((quad.count, N, L))
    flat = vol_pts.reshape(-1, mesh.dim)
    tcoef = (area / (c * dt))[:, None]
    for m in range(quad.count):
        qv = spec.eval_q(flat, quad.directions[m], t_new).reshape(N, -1)
        bq[m] = np.einsum("nq,nq,qp->np", wvol, qv, ref.vol_phi)
        bq[m] += tcoef * field_old.coeffs[m]

    centroids = mesh.centroids()
    orders = np.empty((quad.count, N), dtype=np.int64)
    for m in range(quad.count):
        orders[m] = sweep_order(mesh, quad.directions[m], opts.sweep, centroids)

    return StepSystem(
        mesh=mesh, ref=ref, quad=quad, dt=dt, t_new=t_new, c=c,
        area=area, x0=x0, einv=einv, Adt=Adt, Dx=Dx, Dy=Dy,
        nx=nx, ny=ny, wedge=wedge, pin=pin,
        nb=np.ascontiguousarray(nb), nbe=np.ascontiguousarray(nbe),
        bmap=bmap, gvals=gvals, bq=bq, sigs=spec.sigma_s * area,
        orders=orders, zetas=zetas, etas=etas,
        vol_pts=vol_pts, edge_pts=edge_pts)


def refresh_step_system(system: StepSystem, spec: ProblemSpec,
                        field_old: DGField, t_new: float) -> StepSystem:
    """Update only the time-dependent data (sources, boundary values,
    old-time term) of a stationary-mesh system."""
    mesh, ref, quad = system.mesh, system.ref, system.quad
    if field_old.mesh is not mesh:
        raise ValueError("refresh requires the field to live on the system mesh")
    system.t_new = t_new
    wvol = system.area[:, None] * ref.vol_wts[None, :]
    flat = system.vol_pts.reshape(-1, mesh.dim)
    tcoef = (system.area / (system.c * system.dt))[:, None]
    for m in range(quad.count):
        qv = spec.eval_q(flat, quad.directions[m], t_new).reshape(mesh.n_elements, -1)
        system.bq[m] = np.einsum("nq,nq,qp->np", wvol, qv, ref.vol_phi)
        system.bq[m] += tcoef * field_old.coeffs[m]

    bpos = np.nonzero(mesh.conn.boundary_side >= 0)
    bside = mesh.conn.boundary_side[bpos]
    bedge_pts = system.edge_pts[bpos]
    side_normals = SIDE_NORMALS_2D if mesh.dim == 2 else SIDE_NORMALS_1D
    nqe = system.wedge.shape[2]
    system.gvals[:] = 0.0
    for m in range(quad.count):
        omega2 = np.array([system.zetas[m], system.etas[m]])
        for side in range(side_normals.shape[0]):
            if omega2 @ side_normals[side] >= 0.0:
                continue
            mask = bside == side
            if not np.any(mask):
                continue
            pts = bedge_pts[mask].reshape(-1, mesh.dim)
            vals = spec.eval_g(pts, quad.directions[m], t_new)
            system.gvals[m][mask] = vals.reshape(-1, nqe)
    return system


def assemble_local(system: StepSystem, m: int, k: int, coeffs: np.ndarray,
                   corrected: bool = False):
    """Local system (A, b) for one element and direction.

    ``coeffs`` supplies the neighbour traces and the scattering moments
    at their newest available values.  This is the plain-numpy mirror of
    the sweep kernel, kept for inspection and testing.
    """
    ref = system.ref
    L = ref.n_modes
    A = system.Adt[k] - system.zetas[m] * system.Dx[k] - system.etas[m] * system.Dy[k]
    A = A.copy()
    S = np.einsum("m,mp->p", system.quad.weights, coeffs[:, k, :])
    b = system.bq[m, k] + system.sigs[k] * S
    nqe = system.wedge.shape[2]
    for e in range(system.nx.shape[1]):
        on = system.zetas[m] * system.nx[k, e] + system.etas[m] * system.ny[k, e]
        for g in range(nqe):
            s = on - system.pin[k, e, g]
            outflow = (s >= 0.0) if corrected else (on >= 0.0)
            w = system.wedge[k, e, g]
            tr = ref.edge_phi[e, g]
            if outflow:
                A += w * s * np.outer(tr, tr)
            else:
                nbk = system.nb[k, e]
                if nbk >= 0:
                    ext = ref.edge_phi[system.nbe[k, e], nqe - 1 - g] @ coeffs[m, nbk]
                else:
                    ext = system.gvals[m, system.bmap[k, e], g]
                b -= w * s * tr * ext
    return A, b


def _run_kernel(system: StepSystem, coeffs: np.ndarray, opts: SolverOptions,
                max_iters: int, tol: float):
    deltas = np.zeros(max(max_iters, 1))
    status, n_iters, bad_k, bad_m = _kernels.si_solve(
        coeffs, system.bq, system.sigs, system.Adt, system.Dx, system.Dy,
        system.zetas, system.etas, system.quad.weights, system.orders,
        system.ref.edge_phi, system.nx, system.ny, system.wedge, system.pin,
        system.nb, system.nbe, system.bmap, system.gvals,
        opts.corrected_classification, opts.si_mode == "jacobi",
        tol, max_iters, deltas)
    return status, n_iters, deltas[:n_iters], bad_k, bad_m


def source_iteration_step(system: StepSystem, coeffs: np.ndarray,
                          opts: SolverOptions = None):
    """One sweep over all elements and directions; returns the sup-norm
    coefficient update."""
    opts = opts or SolverOptions()
    status, _, deltas, bad_k, bad_m = _run_kernel(system, coeffs, opts, 1, -1.0)
    if status == _kernels.NOT_FINITE:
        raise SolverError(f"non-finite local solve at element {bad_k}, "
                          f"direction {bad_m}")
    return float(deltas[0])


def advance_step(field_old: DGField, moving: MovingMesh, spec: ProblemSpec,
                 quad: AngularQuadrature, dt: float, t_new: float,
                 opts: SolverOptions = None,
                 system: StepSystem = None,
                 field_prev: DGField = None):
    """Backward-Euler step with source iteration to the fixed point.

    ``field_prev`` (the solution one step earlier) enables the linear
    time extrapolation used as the initial iterate.
    """
    opts = opts or SolverOptions()
    if system is None:
        system = build_step_system(moving, spec, quad, field_old, dt, t_new, opts)
    if opts.si_predictor and field_prev is not None \
            and field_prev.coeffs.shape == field_old.coeffs.shape:
        coeffs = 2.0 * field_old.coeffs - field_prev.coeffs
    else:
        coeffs = field_old.coeffs.copy()
    status, n_iters, deltas, bad_k, bad_m = _run_kernel(
        system, coeffs, opts, opts.si_max_iters, opts.si_tol)
    if status == _kernels.NOT_FINITE:
        raise SolverError(f"non-finite local solve at element {bad_k}, "
                          f"direction {bad_m} (iteration {n_iters})")
    if status == _kernels.CAP_EXCEEDED:
        raise SolverError(f"source iteration cap {opts.si_max_iters} exceeded; "
                          f"last delta {deltas[-1]:.3e}")
    if status == _kernels.DIVERGING:
        raise SolverError(f"source iteration diverging after {n_iters} "
                          f"iterations; last delta {deltas[-1]:.3e}")
    field = DGField(field_old.degree, moving.mesh_new, coeffs, time=t_new)
    return field, StepDiagnostics(n_iters, deltas, status)
