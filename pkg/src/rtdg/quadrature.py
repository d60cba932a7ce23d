"""Discrete-ordinate direction sets and quadrature weights.

The angular integral of the transport equation is replaced by a weighted
sum over a finite set of directions.  Weights are normalized so that

    sum_m w_m f(Omega_m)  ~  (1/4pi) int_S f dOmega      (2D, unit sphere)
    sum_m w_m f(mu_m)     ~  (1/2)   int_{-1}^{1} f dmu  (1D, slab)

i.e. they always sum to one.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AngularQuadrature",
    "gauss_legendre_1d",
    "legendre_chebyshev_2d",
    "single_direction",
]


@dataclass(frozen=True)
class AngularQuadrature:
    """A fixed set of transport directions with positive weights.

    ``directions`` has shape (count, 1) holding mu in 1D, and shape
    (count, 2) holding (zeta, eta) -- the projection of the unit
    direction onto the x-y plane -- in 2D.
    """

    dimension: int
    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.directions, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if d.shape != (w.size, self.dimension):
            raise ValueError(f"directions shape {d.shape} does not match "
                             f"{w.size} weights in {self.dimension}D")
        if not np.all(w > 0):
            raise ValueError("all quadrature weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        if self.dimension == 1:
            mu = d[:, 0]
            if np.any(np.abs(mu) >= 1.0):
                raise ValueError("1D ordinates must lie in (-1, 1)")
            if np.unique(mu).size != mu.size:
                raise ValueError("1D ordinates must be distinct")
        else:
            if np.any(np.einsum("md,md->m", d, d) > 1.0 + 1e-12):
                raise ValueError("2D directions must satisfy zeta^2 + eta^2 <= 1")
        d.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)

    @property
    def count(self) -> int:
        return self.weights.size

    def omega_components(self):
        """Return (zeta, eta) arrays; eta is zero in 1D."""
        zeta = self.directions[:, 0].copy()
        if self.dimension == 2:
            eta = self.directions[:, 1].copy()
        else:
            eta = np.zeros_like(zeta)
        return zeta, eta


def _leggauss(order: int):
    """Gauss-Legendre nodes/weights on (-1, 1), nodes ascending."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    x, w = np.polynomial.legendre.leggauss(order)
    idx = np.argsort(x)
    return x[idx], w[idx]


def gauss_legendre_1d(order: int) -> AngularQuadrature:
    """Slab-geometry ordinates: the `order` Legendre roots as mu-nodes.

    Gauss weights are rescaled by 1/2 so they sum to one against the
    normalized measure (1/2) dmu.
    """
    mu, w = _leggauss(order)
    return AngularQuadrature(1, mu[:, None], w / 2.0)


def legendre_chebyshev_2d(n_polar: int, n_azimuthal: int) -> AngularQuadrature:
    """Product rule: Legendre roots in mu, Chebyshev angles in phi.

    The azimuthal nodes are the midpoint angles phi_j = (2j-1) pi / n,
    j = 1..n, which on the periodic circle coincide with the mapped
    Chebyshev roots and integrate trigonometric polynomials of degree
    < n exactly.  Directions are (zeta, eta) = sqrt(1-mu^2) (cos, sin) phi.
    """
    if n_azimuthal < 1:
        raise ValueError("n_azimuthal must be >= 1")
    mu, wmu = _leggauss(n_polar)
    j = np.arange(1, n_azimuthal + 1)
    phi = (2.0 * j - 1.0) * np.pi / n_azimuthal
    sin_beta = np.sqrt(1.0 - mu**2)
    zeta = np.outer(sin_beta, np.cos(phi)).ravel()
    eta = np.outer(sin_beta, np.sin(phi)).ravel()
    w = np.outer(wmu / 2.0, np.full(n_azimuthal, 1.0 / n_azimuthal)).ravel()
    return AngularQuadrature(2, np.column_stack([zeta, eta]), w)


def single_direction(omega) -> AngularQuadrature:
    """Degenerate one-direction set (weight 1) for transport-only tests."""
    omega = np.asarray(omega, dtype=float).ravel()
    return AngularQuadrature(omega.size, omega[None, :], np.array([1.0]))
