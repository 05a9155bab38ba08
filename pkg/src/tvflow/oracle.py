"""Independent reference solutions and canonical initial data.

The 1-D sphere-valued benchmark starts from three facets (a, h0, b) whose
outer values never move while the middle value h(t) = (h1, 0, h3) follows a
scalar ODE; that ODE is integrated here with plain explicit Euler so the
reference stays independent of all manifold machinery in the solver.  The
unit-circle invariant h1^2 + h3^2 = 1 is monitored but deliberately not
enforced: correcting it would entangle the oracle with the geometry it is
supposed to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import rotation_from_axis_angle, s2_from_euler
from .grid import Field, RectPartition


class OracleError(ValueError):
    """Invalid benchmark data or a singular ODE coefficient."""


@dataclass(frozen=True)
class BenchmarkSpec:
    """Three-facet initial data on (0, L) with breakpoints l1 < l2.

    The outer facet values are a = (a1, a2, 0) and b = (a1, -a2, 0); the
    middle facet starts at h0, a unit vector in the x2 = 0 plane with
    nonvanishing third component.
    """

    a1: float
    a2: float
    h0: tuple[float, float, float]
    l1: float
    l2: float
    length: float

    def __post_init__(self):
        if abs(self.a1 ** 2 + self.a2 ** 2 - 1.0) > 1e-12:
            raise OracleError("a1^2 + a2^2 must equal 1")
        if self.a1 <= 0:
            raise OracleError("a1 must be positive")
        h = np.asarray(self.h0, dtype=float)
        if abs(np.linalg.norm(h) - 1.0) > 1e-12 or abs(h[1]) > 1e-12 or h[2] == 0:
            raise OracleError("h0 must be a unit vector in {x2 = 0} with x3 != 0")
        if not 0.0 < self.l1 < self.l2 < self.length:
            raise OracleError("need 0 < l1 < l2 < length")

    @property
    def c(self) -> float:
        """Middle facet length."""
        return self.l2 - self.l1

    @property
    def a(self) -> np.ndarray:
        return np.array([self.a1, self.a2, 0.0])

    @property
    def b(self) -> np.ndarray:
        return np.array([self.a1, -self.a2, 0.0])


def default_benchmark() -> BenchmarkSpec:
    """The standard configuration: a1 = a2 = 1/sqrt(2), breakpoints 2/5, 3/5."""
    r = math.sqrt(0.5)
    return BenchmarkSpec(a1=r, a2=r, h0=(r, 0.0, r), l1=0.4, l2=0.6, length=1.0)


# ---------------------------------------------------------------------------
# middle-facet ODE
# ---------------------------------------------------------------------------

def ode_rhs(h1: float, h3: float, bench: BenchmarkSpec) -> tuple[float, float]:
    """d/dt (h1, h3) = -sqrt(2) a1 / (c sqrt(1 - a1 h1)) * (h1^2 - 1, h1 h3)."""
    rad = 1.0 - bench.a1 * h1
    if rad <= 0.0:
        raise OracleError(f"singular ODE coefficient: 1 - a1*h1 = {rad:.3e} <= 0")
    coef = -math.sqrt(2.0) * bench.a1 / (bench.c * math.sqrt(rad))
    return coef * (h1 * h1 - 1.0), coef * (h1 * h3)


def ode_h_step(h1: float, h3: float, bench: BenchmarkSpec, dt: float
               ) -> tuple[float, float]:
    """One explicit Euler step of the middle-facet ODE."""
    if dt <= 0:
        raise OracleError("dt must be positive")
    f1, f3 = ode_rhs(h1, h3, bench)
    return h1 + dt * f1, h3 + dt * f3


@dataclass
class OdeSolution:
    t: float
    h1: float
    h3: float
    max_drift: float
    n_steps: int


def ode_h_trajectory(bench: BenchmarkSpec, times, dt: float = 1e-6
                     ) -> list[OdeSolution]:
    """Integrate the middle-facet ODE through a sorted list of times.

    Segments between requested times are split into whole steps of size
    ``dt`` plus at most one shorter remainder step.
    """
    if dt <= 0:
        raise OracleError("dt must be positive")
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise OracleError("times must be nonnegative and ascending")
    h1, h3 = float(bench.h0[0]), float(bench.h0[2])
    drift = abs(h1 * h1 + h3 * h3 - 1.0)
    out: list[OdeSolution] = []
    t = 0.0
    total_steps = 0
    for target in times:
        span = target - t
        n_full = int(math.floor(span / dt + 1e-9))
        rem = span - n_full * dt
        for _ in range(n_full):
            h1, h3 = ode_h_step(h1, h3, bench, dt)
            d = abs(h1 * h1 + h3 * h3 - 1.0)
            if d > drift:
                drift = d
        if rem > 1e-12 * dt:
            h1, h3 = ode_h_step(h1, h3, bench, rem)
            drift = max(drift, abs(h1 * h1 + h3 * h3 - 1.0))
        total_steps += n_full
        t = target
        out.append(OdeSolution(t=t, h1=h1, h3=h3, max_drift=drift,
                               n_steps=total_steps))
    return out


def ode_h_integrate(bench: BenchmarkSpec, t_end: float, dt: float = 1e-6
                    ) -> OdeSolution:
    """Integrate from 0 to t_end; returns the endpoint with drift monitoring."""
    return ode_h_trajectory(bench, [t_end], dt=dt)[-1]


# ---------------------------------------------------------------------------
# reference flow and initial data
# ---------------------------------------------------------------------------

def _facet_masks(bench: BenchmarkSpec, partition: RectPartition):
    if partition.dim != 1:
        raise OracleError("the three-facet benchmark needs a 1-D partition")
    x = partition.centers[:, 0]
    return x < bench.l1, (x > bench.l1) & (x < bench.l2), x > bench.l2


def three_facet_field(bench: BenchmarkSpec, partition: RectPartition,
                      middle) -> Field:
    """Field equal to a / middle / b on the three facets (cells by center)."""
    m0, m1, m2 = _facet_masks(bench, partition)
    values = np.empty((partition.n_cells, 3))
    values[m0] = bench.a
    values[m1] = np.asarray(middle, dtype=float)
    values[m2] = bench.b
    return Field(partition, values)


def exact_flow(bench: BenchmarkSpec, partition: RectPartition, t: float,
               dt: float = 1e-6) -> Field:
    """Reference solution at time t: outer facets frozen, middle from the ODE."""
    if t < 0:
        raise OracleError("t must be nonnegative")
    if t == 0.0:
        return three_facet_field(bench, partition, bench.h0)
    sol = ode_h_integrate(bench, t, dt=dt)
    return three_facet_field(bench, partition, (sol.h1, 0.0, sol.h3))


# Euler-angle tables of the canonical initial data.  For the sphere the
# colatitude/azimuth pairs reproduce (a, h0, b) of the default benchmark.
S2_INITIAL_THETA = (math.pi / 2, math.pi / 4, math.pi / 2)
S2_INITIAL_PHI = (math.pi / 4, math.pi / 2, 3 * math.pi / 4)

SO3_INITIAL_THETA = tuple(tuple(v * math.pi for v in row) for row in
                          ((0.35, 0.2, 0.55), (0.81, 0.64, 0.4), (0.1, 0.7, 0.3)))
SO3_INITIAL_PHI = tuple(tuple(v * math.pi for v in row) for row in
                        ((0.4, 0.5, 0.7), (0.5, 0.3, 0.4), (0.6, 0.3, 0.4)))
SO3_INITIAL_PSI = tuple(tuple(v * math.pi for v in row) for row in
                        ((0.2, 0.25, 0.3), (0.25, 0.225, 0.2), (0.3, 0.2, 0.35)))

SO3_X_BREAKS = (0.4, 0.6)
SO3_Y_BREAKS = (0.2, 0.8)


def build_s2_benchmark_initial(partition: RectPartition,
                               bench: BenchmarkSpec | None = None) -> Field:
    """Canonical sphere-valued initial field on a 1-D partition of (0, 1)."""
    bench = default_benchmark() if bench is None else bench
    return three_facet_field(bench, partition, bench.h0)


def build_so3_initial(partition: RectPartition) -> Field:
    """Canonical rotation-valued initial field: nine constant blocks.

    Each block's rotation has angle theta about the axis with spherical
    angles (phi, psi).
    """
    if partition.dim != 2:
        raise OracleError("the rotation experiment needs a 2-D partition")
    blocks = {}
    for i in range(3):
        for j in range(3):
            axis = s2_from_euler(SO3_INITIAL_PHI[i][j], SO3_INITIAL_PSI[i][j])
            blocks[i, j] = rotation_from_axis_angle(
                SO3_INITIAL_THETA[i][j], axis).reshape(9)
    values = np.empty((partition.n_cells, 9))
    for idx in range(partition.n_cells):
        cx, cy = partition.centers[idx]
        i = 0 if cx < SO3_X_BREAKS[0] else (1 if cx < SO3_X_BREAKS[1] else 2)
        j = 0 if cy < SO3_Y_BREAKS[0] else (1 if cy < SO3_Y_BREAKS[1] else 2)
        values[idx] = blocks[i, j]
    return Field(partition, values)
