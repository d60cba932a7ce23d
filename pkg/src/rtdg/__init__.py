"""Adaptive moving-mesh DG solver for the unsteady radiative transfer
equation: discrete ordinates in angle, P1/P2 discontinuous Galerkin in
space on meshes moved by a metric-driven gradient flow, implicit Euler
in time with source iteration."""

__version__ = "0.1.0"

from .quadrature import (AngularQuadrature, gauss_legendre_1d,
                         legendre_chebyshev_2d, single_direction)
from .mesh import (SimplicialMesh, MovingMesh, build_uniform, mesh_at_time,
                   validate, validate_moving, n_for_target_elements)
from .dg import (DGField, SolverOptions, project, project_initial,
                 advance_step, build_step_system, classify_edges,
                 sweep_order, SolverError)
from .problems import ProblemSpec, catalog, catalog_names, manufactured_residual
from .metric import (MetricField, HessianRecovery, absolute_value,
                     solve_alpha, metric_from_hessian, intersect,
                     combine_directions, smooth, metric_from_solution)
from .mmpde import (MeshFunctionalState, energy, g_derivatives,
                    nodal_velocities, integrate_mmpde, new_physical_mesh,
                    move_mesh)
from .norms import spatial_norms, global_norms, convergence_order
from .driver import RunConfig, load_config, run, converge, cut, meshdump
