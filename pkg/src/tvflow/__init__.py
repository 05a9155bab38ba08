"""Manifold-constrained discrete total variation flows.

A localized minimizing movement scheme for piecewise-constant fields with
values on S^2 or SO(3): each time step solves a convex tangent-space problem
with an alternating split Bregman iteration and moves along the manifold via
the exponential map.
"""

__version__ = "0.1.0"

from .geometry import (GeometryError, Manifold, ManifoldConstants, SO3,
                       Sphere, geodesic_oracle, get_manifold, matrix_exp_skew,
                       rotation_from_axis_angle, s2_euler_angles,
                       s2_from_euler, skew_matrix, skew_vector,
                       so3_axis_angle)
from .grid import (EdgeField, EdgeSet, Field, GridMismatchError,
                   RectPartition, build_uniform_1d, build_uniform_2d,
                   constant_field, discrete_gradient, discrete_tv, edge_inner,
                   edge_norm, facet, gradient_adjoint, h1_norm, h_delta_inner,
                   h_delta_norm, lip_tv_upper, read_field_csv,
                   write_field_csv)
from .solver import (ConvergenceError, FlowSolver, SBIState, SchemeConfig,
                     StepRecord, Trajectory, nodal_times, shrink)
from .analysis import (DissipationReport, ErrorConstants, check_dissipation,
                       energy_series, error_bound, error_constants,
                       fit_convergence_order, l2_error, rothe_interpolate)
from .oracle import (BenchmarkSpec, OracleError, build_s2_benchmark_initial,
                     build_so3_initial, default_benchmark, exact_flow,
                     ode_h_integrate, ode_h_step, ode_h_trajectory, ode_rhs,
                     three_facet_field)

__all__ = [name for name in dir() if not name.startswith("_")]
