"""Error norms and convergence-order estimation.

Spatial norms are evaluated with the element volume quadrature; the
direction-resolved values are aggregated with the angular weights for
L1/L2 and by the max over directions for Linf.  Global (space-time)
norms compose the per-step spatial norms with the right-endpoint rule,
matching where the implicit stepper produces its solutions.
"""

from dataclasses import dataclass, field

import numpy as np

from .dg import DGField, _element_frames, _physical_points
from .problems import ProblemSpec
from .quadrature import AngularQuadrature

__all__ = ["SpatialNorms", "ErrorReport", "spatial_norms", "global_norms",
           "convergence_order"]


@dataclass
class SpatialNorms:
    t: float
    l1: float
    l2: float
    linf: float
    per_direction: np.ndarray  # (n_dirs, 3)


@dataclass
class ErrorReport:
    """Accumulates per-step norms and reduces them to run-level values."""

    n_elements: int
    degree: int
    mesh_mode: str
    steps: list = field(default_factory=list)
    cpu_seconds: float = 0.0

    def append(self, norms: SpatialNorms):
        self.steps.append(norms)

    def global_norms(self, dt: float):
        if not self.steps:
            return (0.0, 0.0, 0.0)
        table = np.array([[s.l1, s.l2, s.linf] for s in self.steps])
        return tuple(global_norms(table, dt))


def spatial_norms(field: DGField, spec: ProblemSpec, quad: AngularQuadrature,
                  t: float) -> SpatialNorms:
    """Quadrature L1/L2 and node-sampled Linf against the exact solution."""
    mesh = field.mesh
    ref = field.ref
    x0, E, _, _ = _element_frames(mesh)
    pts = _physical_points(x0, E, ref.vol_pts)
    flat = pts.reshape(-1, mesh.dim)
    area = mesh.areas()
    w = area[:, None] * ref.vol_wts[None, :]
    per_dir = np.empty((quad.count, 3))
    for m in range(quad.count):
        vals = field.coeffs[m] @ ref.vol_phi.T
        err = vals - spec.eval_exact(flat, quad.directions[m], t).reshape(vals.shape)
        per_dir[m, 0] = np.sum(w * np.abs(err))
        per_dir[m, 1] = np.sqrt(np.sum(w * err**2))
        per_dir[m, 2] = np.abs(err).max()
    l1 = float(quad.weights @ per_dir[:, 0])
    l2 = float(quad.weights @ per_dir[:, 1])
    linf = float(per_dir[:, 2].max())
    return SpatialNorms(t, l1, l2, linf, per_dir)


def global_norms(per_step, dt: float):
    """Right-endpoint time composite of per-step spatial norms."""
    per_step = np.atleast_2d(np.asarray(per_step, dtype=float))
    return dt * per_step.sum(axis=0)


def convergence_order(counts, errors, dim: int):
    """Least-squares slope of log(error) against log(h), h ~ N^(-1/dim)."""
    counts = np.asarray(counts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if counts.size < 2:
        raise ValueError("need at least two (N, error) pairs")
    if np.any(errors <= 0):
        raise ValueError("errors must be positive")
    h = counts ** (-1.0 / dim)
    slope = np.polyfit(np.log(h), np.log(errors), 1)[0]
    return float(slope)
