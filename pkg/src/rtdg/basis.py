"""Reference elements: quadrature rules and orthonormal modal bases.

All DG elements share one reference element per dimension:

* 1D: the unit interval [0, 1],
* 2D: the unit triangle with vertices (0,0), (1,0), (0,1).

The modal basis is built by Gram-Schmidt (via Cholesky of the monomial
Gram matrix) so that, with the normalized inner product

    <u, v> = (1 / |ref|) \\int_ref u v,

the basis is orthonormal and mode 0 is identically one.  Because the
map from the reference element to any physical element is affine, the
pushed-forward basis is orthogonal on every physical element K with
mass matrix exactly |K| * identity, regardless of shape or skewness.

Quadrature weight convention: weights sum to one and

    \\int_K f  =  |K| * sum_g w_g f(x_g)

for both the interval and the triangle; edge rules likewise satisfy
\\int_e f = len(e) * sum_g w_g f.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["gauss_01", "triangle_rule", "RefElement", "n_modes"]

# Vertices of the reference simplex, rows = local vertex index.
TRI_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
SEG_VERTS = np.array([[0.0], [1.0]])

# Local edges of the reference triangle, ordered so that a CCW element
# traverses each edge from first to second vertex.
TRI_EDGES = ((0, 1), (1, 2), (2, 0))


def gauss_01(n: int):
    """Gauss-Legendre rule on [0, 1] with weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


# Symmetric triangle rules (Dunavant).  Points are given in barycentric
# groups; weights below sum to one in the |K|-normalized convention.
_DUNAVANT = {
    # degree 5, 7 points
    5: [
        (1, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), 0.225),
        (3, (0.059715871789770, 0.470142064105115, 0.470142064105115),
         0.132394152788506),
        (3, (0.797426985353087, 0.101286507323456, 0.101286507323456),
         0.125939180544827),
    ],
    # degree 6, 12 points
    6: [
        (3, (0.873821971016996, 0.063089014491502, 0.063089014491502),
         0.050844906370207),
        (3, (0.501426509658179, 0.249286745170910, 0.249286745170910),
         0.116786275726379),
        (6, (0.636502499121399, 0.310352451033785, 0.053145049844816),
         0.082851075618374),
    ],
}


def _expand_group(mult, bary):
    """All distinct permutations of a barycentric triple (3 or 6 points)."""
    a, b, c = bary
    if mult == 1:
        perms = [(a, b, c)]
    elif mult == 3:
        perms = [(a, b, c), (b, a, c), (b, c, a)]
    else:
        perms = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return perms


def triangle_rule(degree: int):
    """Symmetric quadrature on the reference triangle.

    Returns (points, weights) with points in reference (xi, eta)
    coordinates and weights summing to one.
    """
    for table_deg in sorted(_DUNAVANT):
        if degree <= table_deg:
            pts, wts = [], []
            for mult, bary, w in _DUNAVANT[table_deg]:
                for a, b, c in _expand_group(mult, bary):
                    # barycentric (l0, l1, l2) -> xi = l1, eta = l2
                    pts.append((b, c))
                    wts.append(w)
            return np.array(pts), np.array(wts)
    # Collapsed (Duffy) product rule for degrees beyond the tables:
    # (xi, eta) = (s (1 - r), r) turns the triangle into the unit square
    # with Jacobian (1 - r).
    ns = (degree + 2) // 2
    nr = (degree + 3) // 2
    s, ws = gauss_01(ns)
    r, wr = gauss_01(nr)
    S, R = np.meshgrid(s, r, indexing="ij")
    W = np.outer(ws, wr * (1.0 - r))
    pts = np.column_stack([(S * (1.0 - R)).ravel(), R.ravel()])
    return pts, 2.0 * W.ravel()


def n_modes(dim: int, degree: int) -> int:
    return degree + 1 if dim == 1 else (degree + 1) * (degree + 2) // 2


def _mono_exponents(dim, degree):
    if dim == 1:
        return [(p,) for p in range(degree + 1)]
    exps = []
    for total in range(degree + 1):
        for j in range(total + 1):
            exps.append((total - j, j))
    return exps


def _mono_eval(exps, pts):
    pts = np.atleast_2d(pts)
    out = np.ones((pts.shape[0], len(exps)))
    for p, e in enumerate(exps):
        for ax, k in enumerate(e):
            if k:
                out[:, p] *= pts[:, ax] ** k
    return out


def _mono_grad(exps, pts):
    pts = np.atleast_2d(pts)
    dim = pts.shape[1]
    out = np.zeros((pts.shape[0], len(exps), dim))
    for p, e in enumerate(exps):
        for ax in range(dim):
            if e[ax] == 0:
                continue
            term = e[ax] * np.ones(pts.shape[0])
            for ax2, k in enumerate(e):
                kk = k - 1 if ax2 == ax else k
                if kk:
                    term = term * pts[:, ax2] ** kk
            out[:, p, ax] = term
    return out


@dataclass
class RefElement:
    """Orthonormal modal basis plus quadrature on the reference element.

    The deliberately redundant trace tables (edge, vertex and centroid
    basis values) are what make per-element assembly on arbitrary
    affine elements a matter of table lookups.
    """

    dim: int
    degree: int

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError("only P1 and P2 elements are supported")
        dim, k = self.dim, self.degree
        self.n_modes = n_modes(dim, k)
        self._exps = _mono_exponents(dim, k)

        # Volume rule, exact for degree 2k+2 at least (the assembly needs
        # 2k; the margin covers variable coefficients and verification).
        if dim == 1:
            self.vol_pts, self.vol_wts = gauss_01(k + 2)
            self.vol_pts = self.vol_pts[:, None]
            self.n_edges = 2
            self.edge_nqe = 1
            verts = SEG_VERTS
        else:
            self.vol_pts, self.vol_wts = triangle_rule(2 * k + 2)
            self.n_edges = 3
            self.edge_nqe = 4
            verts = TRI_VERTS
        self.verts = verts

        # Gram-Schmidt against the quadrature (exact for the 2k products).
        V = _mono_eval(self._exps, self.vol_pts)
        G = (V * self.vol_wts[:, None]).T @ V
        L = np.linalg.cholesky(G)
        self.coeff = np.linalg.inv(L)  # phi_p = sum_j coeff[p, j] mono_j

        self.vol_phi = self.basis_at(self.vol_pts)
        self.vol_dphi = self.dbasis_at(self.vol_pts)
        self.vol_bary = self._bary(self.vol_pts)

        # Edge quadrature: Gauss points between the edge's endpoints.
        # Symmetric node placement means two elements sharing an edge
        # sample the same physical points in reversed order.
        if dim == 1:
            # "edges" are the two endpoints; evaluation, not integration
            epts = np.array([[[0.0]], [[1.0]]])
            self.edge_wts = np.array([1.0])
        else:
            s, ws = gauss_01(self.edge_nqe)
            self.edge_wts = ws
            epts = np.empty((3, self.edge_nqe, 2))
            for e, (a, b) in enumerate(TRI_EDGES):
                epts[e] = np.outer(1.0 - s, verts[a]) + np.outer(s, verts[b])
        self.edge_pts = epts
        self.edge_phi = np.stack([self.basis_at(epts[e])
                                  for e in range(self.n_edges)])
        self.edge_bary = np.stack([self._bary(epts[e])
                                   for e in range(self.n_edges)])

        self.vert_phi = self.basis_at(verts)
        centroid = verts.mean(axis=0)[None, :]
        self.centroid_phi = self.basis_at(centroid)[0]

    def _bary(self, pts):
        """Barycentric coordinates of reference points (rows sum to 1)."""
        pts = np.atleast_2d(pts)
        lam = np.empty((pts.shape[0], self.dim + 1))
        lam[:, 1:] = pts
        lam[:, 0] = 1.0 - pts.sum(axis=1)
        return lam

    def basis_at(self, ref_pts):
        """Basis values at reference points, shape (npts, L)."""
        return _mono_eval(self._exps, ref_pts) @ self.coeff.T

    def dbasis_at(self, ref_pts):
        """Reference-coordinate basis gradients, shape (npts, L, dim)."""
        dm = _mono_grad(self._exps, ref_pts)
        return np.einsum("pjd,lj->pld", dm, self.coeff)


_CACHE = {}


def ref_element(dim: int, degree: int) -> RefElement:
    key = (dim, degree)
    if key not in _CACHE:
        _CACHE[key] = RefElement(dim, degree)
    return _CACHE[key]
