"""Trajectory diagnostics: interpolation, energy decay, error estimates.

The error-estimate machinery evaluates the a-priori bound

    |u_tau(t) - u(t)|^2 <= exp(c0 t) gap^2 + t exp(c0 t) (c1 tau + c2 tau^2)

whose constants are built from upper estimates (the TV Lipschitz bound, the
normal-deviation constant c_m), so the bound dominates measured errors by
construction but can be astronomically loose; it is computed in log space
and reported as infinity on overflow rather than raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Manifold, ManifoldConstants
from .grid import EdgeSet, Field, GridMismatchError, h_delta_norm
from .grid import discrete_tv as _tv
from .solver import Trajectory


@dataclass(frozen=True)
class ErrorConstants:
    """Constants of the finite-time error bound, with their inputs."""

    c0: float
    c1: float
    c2: float
    c_m: float
    lip: float
    v_min: float
    curv: float
    diam: float
    domain_measure: float


def error_constants(constants: ManifoldConstants, lip: float, v_min: float,
                    domain_measure: float) -> ErrorConstants:
    """Evaluate the three bound constants from manifold and grid data."""
    if lip < 0 or v_min <= 0 or domain_measure <= 0:
        raise ValueError("lip must be nonnegative, v_min and domain_measure positive")
    c_m, curv, diam = constants.c_m_upper, constants.curv, constants.diam
    c0 = 2.0 * c_m * lip / math.sqrt(v_min)
    c1 = (2.0 + diam * math.sqrt(domain_measure) * (2.0 * c_m / v_min + curv)) * lip ** 2
    c2 = (1.5 * curv + c_m / math.sqrt(v_min)) * lip ** 3
    return ErrorConstants(c0=c0, c1=c1, c2=c2, c_m=c_m, lip=lip, v_min=v_min,
                          curv=curv, diam=diam, domain_measure=domain_measure)


def error_bound(t: float, tau: float, u0_gap: float, ec: ErrorConstants) -> float:
    """Right-hand side of the error estimate (a bound on the squared norm)."""
    if t < 0 or tau < 0 or u0_gap < 0:
        raise ValueError("t, tau and u0_gap must be nonnegative")
    log_growth = ec.c0 * t
    total = 0.0
    if u0_gap > 0:
        lg = log_growth + 2.0 * math.log(u0_gap)
        total += math.inf if lg > 709.0 else math.exp(lg)
    drift = t * (ec.c1 * tau + ec.c2 * tau ** 2)
    if drift > 0:
        lg = log_growth + math.log(drift)
        total += math.inf if lg > 709.0 else math.exp(lg)
    return total


def l2_error(u: Field, v: Field) -> float:
    """Weighted cell-norm distance between two fields."""
    if u.partition is not v.partition or u.values.shape != v.values.shape:
        raise GridMismatchError("fields live on different discretizations")
    return h_delta_norm(Field(u.partition, u.values - v.values))


# ---------------------------------------------------------------------------
# Rothe interpolation
# ---------------------------------------------------------------------------

def rothe_interpolate(traj: Trajectory, manifold: Manifold, t: float) -> Field:
    """Piecewise-geodesic interpolant of a trajectory, continuous in time.

    At nodal times the stored states are returned exactly; inside a step the
    state travels along exp at the proportional fraction of the increment.
    """
    times = traj.times
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ValueError(f"t={t} outside trajectory interval "
                         f"[{times[0]}, {times[-1]}]")
    t = min(max(t, float(times[0])), float(times[-1]))
    n = int(np.searchsorted(times, t, side="right")) - 1
    if n >= traj.n_steps:               # exactly the final node
        return traj.states[-1].copy()
    frac = (t - float(times[n])) / float(times[n + 1] - times[n])
    if frac == 0.0:
        return traj.states[n].copy()
    base = traj.states[n]
    inc = traj.increments[n]
    values = manifold.exp_map(base.values, frac * inc.values)
    return Field(base.partition, values)


# ---------------------------------------------------------------------------
# energy decay
# ---------------------------------------------------------------------------

def energy_series(traj: Trajectory, edges: EdgeSet) -> np.ndarray:
    """Total variation of every stored state, recomputed from scratch."""
    return np.array([_tv(u, edges) for u in traj.states])


@dataclass
class DissipationReport:
    tau_curv_lip: float
    hypothesis_holds: bool
    monotone: bool
    max_increase: float
    energies: np.ndarray

    @property
    def ok(self) -> bool:
        """Dissipation verdict: monotone whenever the hypothesis applies."""
        return self.monotone or not self.hypothesis_holds


def check_dissipation(traj: Trajectory, edges: EdgeSet, curv: float,
                      lip: float, slack: float = 1e-10) -> DissipationReport:
    """Check the small-step energy decay condition along a trajectory.

    The decay of the total variation is guaranteed when
    tau * curv * lip <= 1; the report flags both whether that hypothesis
    holds and whether the energies actually decrease (within ``slack``).
    """
    tau_max = max((r.tau for r in traj.records), default=0.0)
    energies = energy_series(traj, edges)
    diffs = np.diff(energies)
    max_increase = float(diffs.max()) if diffs.size else 0.0
    return DissipationReport(
        tau_curv_lip=tau_max * curv * lip,
        hypothesis_holds=tau_max * curv * lip <= 1.0,
        monotone=bool(np.all(diffs <= slack)),
        max_increase=max_increase,
        energies=energies)


# ---------------------------------------------------------------------------
# convergence-order fit
# ---------------------------------------------------------------------------

def fit_convergence_order(taus, errors) -> tuple[float, float, float]:
    """Least-squares line through (log tau, log error): (slope, intercept, r2)."""
    taus = np.asarray(taus, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if taus.size < 2:
        raise ValueError("need at least two (tau, error) pairs")
    if np.any(taus <= 0) or np.any(errors <= 0):
        raise ValueError("taus and errors must be positive")
    lt, le = np.log(taus), np.log(errors)
    slope, intercept = np.polyfit(lt, le, 1)
    pred = slope * lt + intercept
    ss_res = float(np.sum((le - pred) ** 2))
    ss_tot = float(np.sum((le - le.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2
