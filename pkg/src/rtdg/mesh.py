"""Simplicial meshes (intervals / triangles) and moving-mesh kinematics.

Connectivity is built once and never changes; a moving mesh is a pair
of vertex coordinate sets sharing the same connectivity, with vertex
positions interpolated linearly in time inside each time slab.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SimplicialMesh",
    "MovingMesh",
    "MeshReport",
    "MeshError",
    "build_uniform",
    "mesh_at_time",
    "validate",
    "validate_moving",
    "n_for_target_elements",
    "write_unstructured_grid",
    "write_vertex_csv",
]

# vertex kinds
INTERIOR, SLIDE, CORNER = 0, 1, 2

_GEOM_TOL = 1e-12


class MeshError(RuntimeError):
    pass


@dataclass
class MeshReport:
    ok: bool
    violations: list

    @property
    def first(self):
        return self.violations[0] if self.violations else None

    def __str__(self):
        if self.ok:
            return "mesh ok"
        kind, elem, detail = self.first
        return f"mesh invalid: element {elem}: {kind} ({detail})"


@dataclass
class _Connectivity:
    """Shared, immutable topology of a mesh family."""

    neighbors: np.ndarray      # (N, n_edges)  -1 on the boundary
    neighbor_edge: np.ndarray  # (N, n_edges)  local edge id in the neighbor
    boundary_side: np.ndarray  # (N, n_edges)  -1 interior, else side id
    vertex_kind: np.ndarray    # (Nv,)  INTERIOR / SLIDE / CORNER
    slide_axis: np.ndarray     # (Nv,)  free axis for SLIDE vertices, else -1
    patch_ptr: np.ndarray      # CSR over vertices into patch_elem/local
    patch_elem: np.ndarray
    patch_local: np.ndarray
    edges: np.ndarray          # (NE, 2) sorted vertex pairs
    edge_elems: np.ndarray     # (NE, 2) incident elements, -1 if boundary


@dataclass
class SimplicialMesh:
    """Interval (1D) or triangle (2D) mesh over an axis-aligned box.

    ``elements`` stores vertex indices, CCW in 2D.  Vertices are the
    only thing that may differ between meshes sharing a connectivity.
    """

    dim: int
    vertices: np.ndarray   # (Nv, dim)
    elements: np.ndarray   # (N, dim+1)
    lo: np.ndarray         # domain box corners
    hi: np.ndarray
    conn: _Connectivity = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        self.lo = np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.asarray(self.hi, dtype=float).ravel()
        if self.conn is None:
            self.conn = _build_connectivity(self)

    # -- basic queries ----------------------------------------------------

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def domain_measure(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def element_vertices(self):
        """Coordinates per element, shape (N, dim+1, dim)."""
        return self.vertices[self.elements]

    def areas(self):
        """Signed measures |K| (lengths in 1D, CCW areas in 2D)."""
        xv = self.element_vertices()
        if self.dim == 1:
            return xv[:, 1, 0] - xv[:, 0, 0]
        u = xv[:, 1] - xv[:, 0]
        v = xv[:, 2] - xv[:, 0]
        return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])

    def centroids(self):
        return self.element_vertices().mean(axis=1)

    def with_vertices(self, vertices) -> "SimplicialMesh":
        """New mesh with moved vertices, sharing this connectivity."""
        return SimplicialMesh(self.dim, np.array(vertices, dtype=float),
                              self.elements, self.lo, self.hi, self.conn)


def n_for_target_elements(target: int, dim: int = 2):
    """Smallest uniform subdivision n reaching >= target elements.

    Returns (n, actual_n_elements, exact).  In 2D the element count is
    2 n^2, so some published counts have no exact match.
    """
    if dim == 1:
        return target, target, True
    n = int(np.ceil(np.sqrt(target / 2.0)))
    return n, 2 * n * n, 2 * n * n == target


def build_uniform(domain, n: int) -> SimplicialMesh:
    """Uniform mesh: n equal intervals, or n x n squares split into
    triangles along the bottom-left/top-right diagonal."""
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    dom = np.asarray(domain, dtype=float)
    if dom.ndim == 1:
        lo, hi = dom[:1], dom[1:]
        if hi[0] - lo[0] <= 0:
            raise ValueError("degenerate interval")
        x = np.linspace(lo[0], hi[0], n + 1)
        verts = x[:, None]
        elems = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        return SimplicialMesh(1, verts, elems, lo, hi)

    lo = dom[:, 0]
    hi = dom[:, 1]
    if np.any(hi - lo <= 0):
        raise ValueError("degenerate rectangle")
    x = np.linspace(lo[0], hi[0], n + 1)
    y = np.linspace(lo[1], hi[1], n + 1)
    X, Y = np.meshgrid(x, y, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    elems = np.empty((2 * n * n, 3), dtype=np.int64)
    t = 0
    for j in range(n):
        for i in range(n):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            elems[t] = (a, b, c)      # lower-right triangle
            elems[t + 1] = (a, c, d)  # upper-left triangle
            t += 2
    return SimplicialMesh(2, verts, elems, lo, hi)


def _build_connectivity(mesh: SimplicialMesh) -> _Connectivity:
    dim, elems, verts = mesh.dim, mesh.elements, mesh.vertices
    N = elems.shape[0]
    n_edges = dim + 1 if dim == 2 else 2
    scale = np.max(mesh.hi - mesh.lo)
    tol = _GEOM_TOL * max(scale, 1.0)

    on_lo = np.abs(verts - mesh.lo) <= tol
    on_hi = np.abs(verts - mesh.hi) <= tol

    if dim == 1:
        local_edges = ((0,), (1,))
    else:
        local_edges = ((0, 1), (1, 2), (2, 0))

    edge_map = {}
    for k in range(N):
        for e, le in enumerate(local_edges):
            key = tuple(sorted(elems[k, list(le)]))
            edge_map.setdefault(key, []).append((k, e))

    neighbors = np.full((N, n_edges), -1, dtype=np.int64)
    neighbor_edge = np.full((N, n_edges), -1, dtype=np.int64)
    boundary_side = np.full((N, n_edges), -1, dtype=np.int64)
    edges, edge_elems = [], []

    for key, incident in edge_map.items():
        edges.append(key if dim == 2 else (key[0], key[0]))
        if len(incident) == 2:
            (k1, e1), (k2, e2) = incident
            neighbors[k1, e1] = k2
            neighbor_edge[k1, e1] = e2
            neighbors[k2, e2] = k1
            neighbor_edge[k2, e2] = e1
            edge_elems.append((k1, k2))
        elif len(incident) == 1:
            k1, e1 = incident[0]
            vs = list(key)
            side = _side_of(on_lo[vs], on_hi[vs], dim)
            if side < 0:
                raise MeshError(f"boundary edge of element {k1} not on the "
                                "domain boundary")
            boundary_side[k1, e1] = side
            edge_elems.append((k1, -1))
        else:
            raise MeshError(f"edge {key} shared by {len(incident)} elements")

    # vertex classification: sides are 0:y=lo, 1:x=hi, 2:y=hi, 3:x=lo (2D)
    Nv = verts.shape[0]
    vertex_kind = np.full(Nv, INTERIOR, dtype=np.int8)
    slide_axis = np.full(Nv, -1, dtype=np.int8)
    if dim == 1:
        n_sides = on_lo[:, 0].astype(int) + on_hi[:, 0].astype(int)
        vertex_kind[n_sides >= 1] = CORNER
    else:
        n_sides = (on_lo.sum(axis=1) + on_hi.sum(axis=1)).astype(int)
        vertex_kind[n_sides == 1] = SLIDE
        vertex_kind[n_sides >= 2] = CORNER
        horiz = on_lo[:, 1] | on_hi[:, 1]  # on y = const sides
        slide_axis[(vertex_kind == SLIDE) & horiz] = 0
        slide_axis[(vertex_kind == SLIDE) & ~horiz] = 1

    # vertex -> element patches (CSR, element order ascending)
    counts = np.zeros(Nv, dtype=np.int64)
    for k in range(N):
        for v in elems[k]:
            counts[v] += 1
    patch_ptr = np.zeros(Nv + 1, dtype=np.int64)
    np.cumsum(counts, out=patch_ptr[1:])
    patch_elem = np.empty(patch_ptr[-1], dtype=np.int64)
    patch_local = np.empty(patch_ptr[-1], dtype=np.int64)
    cursor = patch_ptr[:-1].copy()
    for k in range(N):
        for loc, v in enumerate(elems[k]):
            patch_elem[cursor[v]] = k
            patch_local[cursor[v]] = loc
            cursor[v] += 1

    return _Connectivity(neighbors, neighbor_edge, boundary_side,
                         vertex_kind, slide_axis, patch_ptr, patch_elem,
                         patch_local, np.array(edges, dtype=np.int64),
                         np.array(edge_elems, dtype=np.int64))


def _side_of(on_lo, on_hi, dim):
    """Side id of a boundary edge given per-vertex side flags."""
    if dim == 1:
        if on_lo.all():
            return 0
        if on_hi.all():
            return 1
        return -1
    for side, mask in ((0, on_lo[:, 1]), (1, on_hi[:, 0]),
                       (2, on_hi[:, 1]), (3, on_lo[:, 0])):
        if mask.all():
            return side
    return -1


def validate(mesh: SimplicialMesh, structural: bool = False) -> MeshReport:
    """Check element orientation, tiling, and boundary placement.

    With ``structural=True`` the connectivity arrays are re-derived and
    compared (slow; meant for tests, not the per-step hot path).
    """
    violations = []
    areas = mesh.areas()
    bad = np.nonzero(areas <= 0)[0]
    for k in bad:
        violations.append(("nonpositive_area", int(k), float(areas[k])))

    total = areas.sum()
    if abs(total - mesh.domain_measure) > 1e-9 * max(mesh.domain_measure, 1.0):
        violations.append(("tiling_mismatch", -1,
                           f"sum |K| = {total!r} vs |D| = {mesh.domain_measure!r}"))

    scale = np.max(mesh.hi - mesh.lo)
    kind = mesh.conn.vertex_kind
    for axis in range(mesh.dim):
        inside = (mesh.vertices[:, axis] >= mesh.lo[axis] - 1e-9 * scale) & \
                 (mesh.vertices[:, axis] <= mesh.hi[axis] + 1e-9 * scale)
        for v in np.nonzero(~inside)[0]:
            violations.append(("vertex_outside_domain", int(v), axis))
    boundary = np.nonzero(kind != INTERIOR)[0]
    for v in boundary:
        d = np.minimum(np.abs(mesh.vertices[v] - mesh.lo),
                       np.abs(mesh.vertices[v] - mesh.hi))
        if d.min() > 1e-9 * scale:
            violations.append(("boundary_drift", int(v), float(d.min())))

    if structural:
        fresh = _build_connectivity(mesh)
        for name in ("neighbors", "neighbor_edge", "boundary_side"):
            if not np.array_equal(getattr(fresh, name), getattr(mesh.conn, name)):
                violations.append(("connectivity_mismatch", -1, name))
                break

    return MeshReport(len(violations) == 0, violations)


@dataclass
class MovingMesh:
    """Two same-connectivity meshes bounding one time slab."""

    mesh_old: SimplicialMesh
    mesh_new: SimplicialMesh
    dt: float

    def __post_init__(self):
        if self.mesh_old.conn is not self.mesh_new.conn and \
                not np.array_equal(self.mesh_old.elements, self.mesh_new.elements):
            raise MeshError("moving mesh endpoints must share connectivity")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.velocities = (self.mesh_new.vertices - self.mesh_old.vertices) / self.dt
        if not np.all(np.isfinite(self.velocities)):
            raise MeshError("non-finite vertex velocities")

    @classmethod
    def stationary(cls, mesh: SimplicialMesh, dt: float) -> "MovingMesh":
        return cls(mesh, mesh, dt)


def mesh_at_time(mm: MovingMesh, t: float, t_start: float = 0.0):
    """Vertex positions and velocities at t within [t_start, t_start+dt]."""
    s = (t - t_start) / mm.dt
    if s < -1e-12 or s > 1.0 + 1e-12:
        raise ValueError(f"time {t} outside slab [{t_start}, {t_start + mm.dt}]")
    s = min(max(s, 0.0), 1.0)
    pos = (1.0 - s) * mm.mesh_old.vertices + s * mm.mesh_new.vertices
    return pos, mm.velocities.copy()


def validate_moving(mm: MovingMesh) -> MeshReport:
    """Endpoint validity plus the interior extremum of the (quadratic
    in time) element measures."""
    for label, m in (("old", mm.mesh_old), ("new", mm.mesh_new)):
        rep = validate(m)
        if not rep.ok:
            return MeshReport(False, [(f"{label}_{k}", e, d)
                                      for k, e, d in rep.violations])

    xv0 = mm.mesh_old.element_vertices()
    xv1 = mm.mesh_new.element_vertices()
    violations = []
    if mm.mesh_old.dim == 1:
        # lengths are linear in t; endpoint checks already cover them
        return MeshReport(True, [])
    u0 = xv0[:, 1] - xv0[:, 0]
    v0 = xv0[:, 2] - xv0[:, 0]
    du = (xv1[:, 1] - xv1[:, 0]) - u0
    dv = (xv1[:, 2] - xv1[:, 0]) - v0

    def cross(a, b):
        return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]

    c0 = 0.5 * cross(u0, v0)
    c1 = 0.5 * (cross(u0, dv) + cross(du, v0))
    c2 = 0.5 * cross(du, dv)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_ext = np.where(np.abs(c2) > 0, -c1 / (2.0 * c2), -1.0)
    inside = (s_ext > 0.0) & (s_ext < 1.0)
    a_ext = c0 + c1 * s_ext + c2 * s_ext**2
    bad = np.nonzero(inside & (a_ext <= 0))[0]
    for k in bad:
        violations.append(("interior_inversion", int(k),
                           (float(s_ext[k]), float(a_ext[k]))))
    return MeshReport(len(violations) == 0, violations)


# -- exports ---------------------------------------------------------------

def write_unstructured_grid(path, mesh: SimplicialMesh, cell_data=None,
                            title="mesh snapshot"):
    """Plain-text legacy unstructured-grid snapshot (points, cells,
    cell types) with optional per-cell scalar fields."""
    cell_data = cell_data or {}
    N = mesh.n_elements
    npe = mesh.dim + 1
    ctype = 3 if mesh.dim == 1 else 5  # line / triangle
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_vertices} double\n")
        for v in mesh.vertices:
            xyz = list(v) + [0.0] * (3 - mesh.dim)
            f.write(" ".join(f"{c:.16g}" for c in xyz) + "\n")
        f.write(f"CELLS {N} {N * (npe + 1)}\n")
        for el in mesh.elements:
            f.write(f"{npe} " + " ".join(str(int(i)) for i in el) + "\n")
        f.write(f"CELL_TYPES {N}\n")
        for _ in range(N):
            f.write(f"{ctype}\n")
        if cell_data:
            f.write(f"CELL_DATA {N}\n")
            for name, values in cell_data.items():
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for val in np.asarray(values).ravel():
                    f.write(f"{val:.16g}\n")


def write_vertex_csv(path, mesh: SimplicialMesh, step: int):
    """CSV vertex table ``step,vertex_id,x[,y]``."""
    with open(path, "w") as f:
        cols = "step,vertex_id,x" + (",y" if mesh.dim == 2 else "")
        f.write(cols + "\n")
        for j, v in enumerate(mesh.vertices):
            f.write(f"{step},{j}," + ",".join(f"{c:.16g}" for c in v) + "\n")
