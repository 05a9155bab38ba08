"""Localized minimizing movement scheme with a split Bregman inner solver.

Each movement step minimizes the convexified objective

    tau * TV(u_prev + X) + 0.5 * |X|^2

over tangent increments X at the current state and then moves along the
manifold with the pointwise exponential map.  The inner minimization splits
the TV term and the tangency constraint into auxiliary variables (z0, z1)
with multipliers (b0, b1) and alternates:

    (a) x-step: a strictly diagonally dominant linear system, solved with
        Gauss-Seidel sweeps in ascending cell order,
    (b) z-steps: edgewise shrinkage with threshold tau/rho and cellwise
        tangent projection,
    (c) multiplier update.

The iteration stops when |x_k - x_{k-1}| <= inner_tol * |x_k| in the
weighted cell norm, with x_0 = 0.  The comparison is non-strict so that an
exactly stationary state (constant field) terminates at the first iterate.

Dirichlet mode pins every cell whose closure touches the domain boundary:
those increments are held at zero in the x-step sweeps and in the z1
projection, so boundary values never move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import _kernels
from .geometry import Manifold, SO3, Sphere
from .grid import (EdgeField, EdgeSet, Field, GridMismatchError, RectPartition,
                   discrete_gradient, discrete_tv, h_delta_norm)


class ConvergenceError(RuntimeError):
    """An iterative solve ran out of budget.

    Carries ``rel_error`` (inner iteration) or ``residual`` (linear solve)
    for diagnostics.
    """

    def __init__(self, message, rel_error=None, residual=None):
        super().__init__(message)
        self.rel_error = rel_error
        self.residual = residual


@dataclass
class SchemeConfig:
    """Time step and inner-solver parameters.

    Defaults: penalty rho = 0.1 and relative stopping tolerance 1e-4 for the
    inner iteration; iteration caps and the Gauss-Seidel residual tolerance
    are conservative safety nets.
    """

    tau: float
    rho: float = 0.1
    inner_tol: float = 1e-4
    inner_max_iters: int = 10_000
    gs_tol: float = 1e-10
    gs_max_iters: int = 10_000
    boundary: str = "neumann"
    warm_start: bool = False
    record_objective: bool = False

    def __post_init__(self):
        if self.tau <= 0 or self.rho <= 0 or self.gs_tol <= 0:
            raise ValueError("tau, rho and gs_tol must be positive")
        if not 0.0 < self.inner_tol < 1.0:
            raise ValueError("inner_tol must lie in (0, 1)")
        if self.inner_max_iters <= 0 or self.gs_max_iters <= 0:
            raise ValueError("iteration caps must be positive")
        if self.boundary not in ("neumann", "dirichlet"):
            raise ValueError("boundary must be 'neumann' or 'dirichlet'")


@dataclass
class SBIState:
    """One split Bregman iterate: primal x, splits (z0, z1), multipliers."""

    x: Field
    z0: EdgeField
    z1: Field
    b0: EdgeField
    b1: Field
    k: int = 0


@dataclass
class InnerResult:
    iterations: int
    rel_error: float
    gs_sweeps: int
    objective: np.ndarray | None = None


@dataclass
class StepRecord:
    """Per-step metadata of a movement step."""

    index: int
    t_start: float
    t_end: float
    tau: float
    inner_iters: int
    rel_error: float
    gs_sweeps: int
    x_norm: float
    energy: float
    phi_final: float
    phi_at_zero: float


@dataclass
class Trajectory:
    """Discrete flow history: nodal times, states, tangent increments."""

    times: np.ndarray
    states: list[Field]
    increments: list[Field]
    records: list[StepRecord] = dataclass_field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.increments)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


def shrink(x, gamma: float) -> np.ndarray:
    """Proximal map of gamma * |.|: scale x toward zero by gamma.

    Returns the zero vector when |x| <= gamma (in particular at x = 0, where
    the closed form is 0/0).
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    x = np.asarray(x, dtype=float)
    nrm = float(np.linalg.norm(x))
    if nrm <= gamma:
        return np.zeros_like(x)
    return (1.0 - gamma / nrm) * x


def nodal_times(t_end: float, tau: float) -> np.ndarray:
    """Time nodes 0, tau, 2 tau, ... with the last node clamped to t_end.

    The number of steps is t_end / tau rounded up, except that an exact
    multiple (within relative 1e-9) is not padded with an empty step.
    """
    if t_end <= 0 or tau <= 0:
        raise ValueError("t_end and tau must be positive")
    ratio = t_end / tau
    n = int(round(ratio)) if abs(ratio - round(ratio)) <= 1e-9 * max(1.0, ratio) \
        else int(math.ceil(ratio))
    n = max(n, 1)
    times = np.arange(n + 1) * tau
    times[-1] = t_end
    return times


class FlowSolver:
    """Driver for the constrained total variation flow on a fixed grid."""

    def __init__(self, manifold: Manifold, partition: RectPartition,
                 edges: EdgeSet, config: SchemeConfig):
        if edges.n_cells != partition.n_cells:
            raise GridMismatchError("edge set does not match partition")
        self.manifold = manifold
        self.partition = partition
        self.edges = edges
        self.config = config
        if isinstance(manifold, Sphere):
            self._manifold_id = _kernels.MANIFOLD_SPHERE
        elif isinstance(manifold, SO3):
            self._manifold_id = _kernels.MANIFOLD_SO3
        else:
            raise ValueError(f"unsupported manifold {manifold!r}")
        self._build_structure()
        self._warm_state = None

    # -- precomputed linear-system structure ---------------------------------
    def _build_structure(self):
        part, edges = self.partition, self.edges
        nc, ne = part.n_cells, edges.n_edges
        deg = np.zeros(nc, dtype=np.int64)
        np.add.at(deg, edges.cells_a, 1)
        np.add.at(deg, edges.cells_b, 1)
        indptr = np.zeros(nc + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        nbr_cell = np.zeros(indptr[-1], dtype=np.int64)
        nbr_edge = np.zeros(indptr[-1], dtype=np.int64)
        nbr_h = np.zeros(indptr[-1])
        nbr_sign = np.zeros(indptr[-1])
        fill = indptr[:-1].copy()
        ea, eb, eh = edges.cells_a, edges.cells_b, edges.measures
        for g in range(ne):
            a, b = ea[g], eb[g]
            nbr_cell[fill[a]] = b
            nbr_edge[fill[a]] = g
            nbr_h[fill[a]] = eh[g]
            nbr_sign[fill[a]] = 1.0
            fill[a] += 1
            nbr_cell[fill[b]] = a
            nbr_edge[fill[b]] = g
            nbr_h[fill[b]] = eh[g]
            nbr_sign[fill[b]] = -1.0
            fill[b] += 1
        self._indptr = indptr
        self._nbr_cell = nbr_cell
        self._nbr_edge = nbr_edge
        self._nbr_h = nbr_h
        self._nbr_sign = nbr_sign
        s = np.zeros(nc)
        np.add.at(s, ea, eh)
        np.add.at(s, eb, eh)
        rho = self.config.rho
        self._coef = rho / part.measures
        self._diag = (1.0 + rho) + self._coef * s
        if self.config.boundary == "dirichlet":
            self._active = ~part.boundary_cells
        else:
            self._active = np.ones(nc, dtype=bool)

    @property
    def l(self) -> int:
        return self.manifold.ambient_dim

    def zero_state(self) -> SBIState:
        nc, ne, l = self.partition.n_cells, self.edges.n_edges, self.l
        return SBIState(
            x=Field(self.partition, np.zeros((nc, l))),
            z0=EdgeField(self.edges, np.zeros((ne, l))),
            z1=Field(self.partition, np.zeros((nc, l))),
            b0=EdgeField(self.edges, np.zeros((ne, l))),
            b1=Field(self.partition, np.zeros((nc, l))),
        )

    # -- individual iteration maps (exposed for tests and diagnostics) -------
    def x_step(self, state: SBIState, u_prev: Field, tau: float | None = None) -> Field:
        """Solve the quadratic x-subproblem for the current splits.

        The normal equations ((1+rho) I + rho M^-1 D* D) x = rhs are strictly
        diagonally dominant; Gauss-Seidel sweeps run until the weighted
        residual is below gs_tol * (1 + |rhs|).
        """
        del tau  # the x-subproblem does not involve the time step
        cfg = self.config
        du = discrete_gradient(u_prev, self.edges)
        rhs = np.zeros_like(state.x.values)
        bn = _kernels.x_step_rhs(
            cfg.rho, state.z0.values, state.z1.values, state.b0.values,
            state.b1.values, du.values, self.partition.measures, self._indptr,
            self._nbr_edge, self._nbr_h, self._nbr_sign, self._active, rhs)
        x = state.x.values.copy()
        x[~self._active] = 0.0
        sweeps, res = _kernels.gs_solve(
            x, rhs, self._diag, self._coef, self.partition.measures,
            self._indptr, self._nbr_cell, self._nbr_h, self._active,
            cfg.gs_tol * (1.0 + bn), cfg.gs_max_iters)
        if sweeps < 0:
            raise ConvergenceError(
                f"Gauss-Seidel did not reach tolerance in {cfg.gs_max_iters} "
                f"sweeps (residual {res:.3e})", residual=res)
        return Field(self.partition, x)

    def z0_step(self, state: SBIState, u_prev: Field, tau: float | None = None) -> EdgeField:
        """Edgewise shrinkage of D x + D u_prev + b0 with threshold tau/rho."""
        tau = self.config.tau if tau is None else tau
        du = discrete_gradient(u_prev, self.edges)
        dx = discrete_gradient(state.x, self.edges)
        a = dx.values + du.values + state.b0.values
        out = np.zeros_like(a)
        _kernels.shrink_rows(a, tau / self.config.rho, out)
        return EdgeField(self.edges, out)

    def z1_step(self, state: SBIState, u_prev: Field) -> Field:
        """Cellwise tangent projection of x + b1 at u_prev."""
        v = state.x.values + state.b1.values
        out = np.zeros_like(v)
        _kernels.project_rows(self._manifold_id, u_prev.values, v, out)
        out[~self._active] = 0.0
        return Field(self.partition, out)

    def b_update(self, state: SBIState, u_prev: Field) -> tuple[EdgeField, Field]:
        """Multiplier update: b += (constraint residual)."""
        du = discrete_gradient(u_prev, self.edges)
        dx = discrete_gradient(state.x, self.edges)
        b0 = state.b0.values + dx.values + du.values - state.z0.values
        b1 = state.b1.values + state.x.values - state.z1.values
        return EdgeField(self.edges, b0), Field(self.partition, b1)

    # -- inner solve ----------------------------------------------------------
    def solve_vp_loc(self, u_prev: Field, tau: float | None = None) -> tuple[Field, InnerResult]:
        """Minimize the localized objective over tangent increments at u_prev.

        Returns the increment with the final cellwise tangent projection
        applied (and boundary cells zeroed in Dirichlet mode), so the
        exponential map's precondition holds exactly.
        """
        cfg = self.config
        tau = cfg.tau if tau is None else tau
        self.manifold.check_point(u_prev.values, tol=1e-8)
        du = discrete_gradient(u_prev, self.edges)
        if cfg.warm_start and self._warm_state is not None:
            state = self._warm_state  # keep splits and multipliers across steps
        else:
            state = self.zero_state()
        phi_out = np.zeros(cfg.inner_max_iters if cfg.record_objective else 1)
        status, iters, rel, sweeps = _kernels.sbi_loop(
            self._manifold_id, u_prev.values, du.values, tau, cfg.rho,
            cfg.inner_tol, cfg.inner_max_iters, cfg.gs_tol, cfg.gs_max_iters,
            self.partition.measures, self._diag, self._coef, self._indptr,
            self._nbr_cell, self._nbr_edge, self._nbr_h, self._nbr_sign,
            self.edges.cells_a, self.edges.cells_b, self.edges.measures,
            self._active, state.x.values, state.z0.values, state.z1.values,
            state.b0.values, state.b1.values, phi_out, cfg.record_objective)
        if status == 2:
            raise ConvergenceError(
                f"Gauss-Seidel stalled inside the inner iteration "
                f"(step budget {cfg.gs_max_iters})")
        if status == 1:
            raise ConvergenceError(
                f"inner iteration did not converge in {cfg.inner_max_iters} "
                f"iterations (relative error {rel:.3e})", rel_error=rel)
        state.k = iters
        if cfg.warm_start:
            self._warm_state = state
        x = np.zeros_like(state.x.values)
        _kernels.project_rows(self._manifold_id, u_prev.values, state.x.values, x)
        x[~self._active] = 0.0
        objective = phi_out[:iters].copy() if cfg.record_objective else None
        return Field(self.partition, x), InnerResult(iters, rel, sweeps, objective)

    # -- outer scheme ----------------------------------------------------------
    def mm_step(self, u_prev: Field, tau: float | None = None
                ) -> tuple[Field, Field, InnerResult]:
        """One movement step: inner solve, then the pointwise exponential map.

        Values are re-projected onto the manifold whenever the invariant
        defect exceeds 1e-12, so drift cannot build up over long runs.
        """
        x, info = self.solve_vp_loc(u_prev, tau=tau)
        values = self.manifold.exp_map(u_prev.values, x.values, check=False)
        defect = self.manifold.point_defect(values)
        drifted = defect > 1e-12
        if np.any(drifted):
            # re-project only the drifted rows; untouched cells (for example
            # pinned Dirichlet boundary values) stay bit-identical
            values[drifted] = self.manifold.project_to_manifold(values[drifted])
        return Field(self.partition, values), x, info

    def run_flow(self, u0: Field, t_end: float) -> Trajectory:
        """Run the scheme from u0 to t_end and record the full history.

        The last step is shortened so the final node lands exactly on t_end;
        the shortened step length enters both the shrinkage threshold and
        the objective.
        """
        self.manifold.check_point(u0.values, tol=1e-8)
        times = nodal_times(t_end, self.config.tau)
        traj = Trajectory(times=times, states=[u0.copy()], increments=[])
        u = u0.copy()
        for n in range(1, len(times)):
            tau_eff = float(times[n] - times[n - 1])
            u_next, x, info = self.mm_step(u, tau=tau_eff)
            phi_final = tau_eff * discrete_tv(Field(self.partition,
                                                    u.values + x.values),
                                              self.edges) \
                + 0.5 * h_delta_norm(x) ** 2
            phi_zero = tau_eff * discrete_tv(u, self.edges)
            traj.states.append(u_next)
            traj.increments.append(x)
            traj.records.append(StepRecord(
                index=n, t_start=float(times[n - 1]), t_end=float(times[n]),
                tau=tau_eff, inner_iters=info.iterations,
                rel_error=info.rel_error, gs_sweeps=info.gs_sweeps,
                x_norm=h_delta_norm(x),
                energy=discrete_tv(u_next, self.edges),
                phi_final=phi_final, phi_at_zero=phi_zero))
            u = u_next
        return traj
