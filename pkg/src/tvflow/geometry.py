"""Target-manifold geometry for S^2 and SO(3).

Points and tangent vectors are plain float64 arrays in ambient coordinates:
3-vectors for the unit sphere, flattened row-major 3x3 matrices (9-vectors)
for rotations.  The flattening makes the ambient dot product equal to the
trace inner product trace(X^T Y), so no extra weighting is needed anywhere.

All operations broadcast over a leading batch axis: a point argument may be
a single ``(l,)`` vector or an ``(n, l)`` stack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """A manifold precondition was violated beyond tolerance."""


POINT_TOL = 1e-10


@dataclass(frozen=True)
class ManifoldConstants:
    """Diagnostic constants of an embedded manifold.

    ``c_m_upper`` bounds sup over point pairs of
    ``|normal_project(p, p - q)| / |p - q|^2``.  For constants derived from
    curvature/diameter/local feature size (``source == "closed-form"``) it
    equals ``2 * curv * max(1, diam / lfs)**2``; for ``source == "empirical"``
    it is a sampled estimate inflated by a safety factor and ``lfs`` is not
    available.
    """

    curv: float
    diam: float
    lfs: float | None
    c_m_upper: float
    source: str

    @staticmethod
    def from_bound(curv: float, diam: float, lfs: float) -> "ManifoldConstants":
        c_m = 2.0 * curv * max(1.0, diam / lfs) ** 2
        return ManifoldConstants(curv=curv, diam=diam, lfs=lfs,
                                 c_m_upper=c_m, source="closed-form")


def _row_norms(a: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a, axis=-1)


class Manifold:
    """Common interface for the supported target manifolds."""

    name: str
    ambient_dim: int

    # -- invariants ---------------------------------------------------------
    def point_defect(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tangent_defect(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_point(self, p: np.ndarray, tol: float = POINT_TOL) -> None:
        d = np.max(self.point_defect(p))
        if d > tol:
            raise GeometryError(
                f"point violates {self.name} invariant: defect {d:.3e} > {tol:.1e}")

    # -- core maps ----------------------------------------------------------
    # Base-point preconditions are validated at a looser 1e-8 (the tolerance
    # solver states are guaranteed to satisfy); pass check=False on hot paths
    # that have already validated their input.

    def tangent_project(self, p: np.ndarray, v: np.ndarray,
                        check: bool = True) -> np.ndarray:
        if check:
            self.check_point(p, tol=1e-8)
        return self._tangent_project(p, v)

    def normal_project(self, p: np.ndarray, v: np.ndarray,
                       check: bool = True) -> np.ndarray:
        if check:
            self.check_point(p, tol=1e-8)
        return np.asarray(v, dtype=float) - self._tangent_project(p, v)

    def exp_map(self, p: np.ndarray, v: np.ndarray,
                check: bool = True) -> np.ndarray:
        if check:
            self.check_point(p, tol=1e-8)
        return self._exp_map(p, v)

    def _tangent_project(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _exp_map(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project_to_manifold(self, p: np.ndarray) -> np.ndarray:
        """Snap nearly-feasible ambient points back onto the manifold."""
        raise NotImplementedError

    def retract(self, p: np.ndarray) -> np.ndarray:
        """First-order cheap variant of :meth:`project_to_manifold`."""
        return self.project_to_manifold(p)

    # -- sampling ------------------------------------------------------------
    def random_point(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def random_tangent(self, rng: np.random.Generator, p: np.ndarray,
                       scale: float = 1.0) -> np.ndarray:
        v = rng.standard_normal(np.shape(p))
        return scale * self.tangent_project(p, v)

    # -- constants -----------------------------------------------------------
    def constants(self) -> ManifoldConstants:
        raise NotImplementedError

    def c_m_empirical(self, n_samples: int, seed: int = 0,
                      batch: int = 200_000) -> float:
        """Max of |normal part of p - q| / |p - q|^2 over sampled pairs."""
        rng = np.random.default_rng(seed)
        best = 0.0
        left = int(n_samples)
        while left > 0:
            m = min(batch, left)
            left -= m
            p = self.random_point(rng, m)
            q = self.random_point(rng, m)
            d = p - q
            den = np.einsum("ij,ij->i", d, d)
            num = _row_norms(self.normal_project(p, d))
            ok = den > 1e-24
            if np.any(ok):
                best = max(best, float(np.max(num[ok] / den[ok])))
        return best


class Sphere(Manifold):
    """The unit sphere S^2 embedded in R^3."""

    name = "s2"
    ambient_dim = 3

    def point_defect(self, p):
        p = np.asarray(p, dtype=float)
        return np.abs(_row_norms(p) - 1.0)

    def tangent_defect(self, p, v):
        return np.abs(np.einsum("...i,...i->...", np.asarray(p, float), np.asarray(v, float)))

    def _tangent_project(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        return v - np.einsum("...i,...i->...", p, v)[..., None] * p

    def _exp_map(self, p, v):
        # great-circle closed form; equals the matrix exponential formula
        # exp(v p^T - p v^T) p for tangent v
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        nrm = _row_norms(v)[..., None]
        safe = np.where(nrm > 0.0, nrm, 1.0)
        out = np.cos(nrm) * p + np.sin(nrm) / safe * v
        return np.where(nrm > 0.0, out, p)

    def project_to_manifold(self, p):
        p = np.asarray(p, dtype=float)
        return p / _row_norms(p)[..., None]

    def random_point(self, rng, n=None):
        shape = (3,) if n is None else (n, 3)
        p = rng.standard_normal(shape)
        return p / _row_norms(p)[..., None]

    def constants(self):
        # curvature 1 (geodesic acceleration is -|v|^2 p), extrinsic diameter
        # 2, local feature size 1 (medial axis is the origin)
        return ManifoldConstants.from_bound(curv=1.0, diam=2.0, lfs=1.0)


class SO3(Manifold):
    """Rotation matrices, stored as flattened row-major 3x3 arrays."""

    name = "so3"
    ambient_dim = 9

    # Sampled estimates (10^6 pairs / finite-difference geodesic acceleration;
    # see scripts/estimate_so3_constants.py), rounded up in the last kept
    # digit.  No closed forms are assumed; lfs is not estimated.
    _CURV_EMPIRICAL = 0.70714
    _DIAM_EMPIRICAL = 2.82843
    _C_M_EMPIRICAL = 0.3535534

    @staticmethod
    def _as_mats(p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p.reshape(p.shape[:-1] + (3, 3))

    @staticmethod
    def _as_vecs(m: np.ndarray) -> np.ndarray:
        return m.reshape(m.shape[:-2] + (9,))

    def point_defect(self, p):
        r = self._as_mats(p)
        gram = np.einsum("...ji,...jk->...ik", r, r)
        ortho = np.linalg.norm(gram - np.eye(3), axis=(-2, -1))
        det_bad = np.where(np.linalg.det(r) > 0.0, 0.0, np.inf)
        return np.maximum(ortho, det_bad)

    def tangent_defect(self, p, v):
        # x^T X must be skew-symmetric
        x = self._as_mats(p)
        w = np.einsum("...ji,...jk->...ik", x, self._as_mats(v))
        return np.linalg.norm(w + np.swapaxes(w, -2, -1), axis=(-2, -1))

    def _tangent_project(self, p, v):
        x = self._as_mats(p)
        m = self._as_mats(v)
        # (X - x X^T x) / 2
        xXtx = np.einsum("...ij,...kj,...kl->...il", x, m, x)
        return self._as_vecs(0.5 * (m - xXtx))

    def _exp_map(self, p, v):
        x = self._as_mats(p)
        w = np.einsum("...ji,...jk->...ik", x, self._as_mats(v))
        w = 0.5 * (w - np.swapaxes(w, -2, -1))  # kill round-off asymmetry
        r = _rodrigues_from_skew(w)
        return self._as_vecs(np.einsum("...ij,...jk->...ik", x, r))

    def project_to_manifold(self, p):
        # Newton iteration for the polar factor; quadratic convergence makes
        # two rounds plenty for nearly-orthogonal inputs
        x = self._as_mats(p).copy()
        for _ in range(3):
            x = 0.5 * (x + np.linalg.inv(np.swapaxes(x, -2, -1)))
        return self._as_vecs(x)

    def retract(self, p):
        # one symmetric-orthogonalization round x (I + (I - x^T x)/2);
        # accurate to second order in the defect, much cheaper than the
        # Newton polar iteration
        x = self._as_mats(p)
        gram = np.einsum("...ji,...jk->...ik", x, x)
        corr = np.eye(3) + 0.5 * (np.eye(3) - gram)
        return self._as_vecs(np.einsum("...ij,...jk->...ik", x, corr))

    def random_point(self, rng, n=None):
        m = 1 if n is None else n
        a = rng.standard_normal((m, 3, 3))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[..., None, :]
        neg = np.linalg.det(q) < 0.0
        q[neg, :, 0] *= -1.0
        out = self._as_vecs(q)
        return out[0] if n is None else out

    def constants(self):
        return ManifoldConstants(
            curv=self._CURV_EMPIRICAL,
            diam=self._DIAM_EMPIRICAL,
            lfs=None,
            c_m_upper=2.0 * self._C_M_EMPIRICAL,
            source="empirical",
        )


_MANIFOLDS = {"s2": Sphere, "so3": SO3}


def get_manifold(name: str) -> Manifold:
    try:
        return _MANIFOLDS[name.lower()]()
    except KeyError:
        raise GeometryError(f"unknown manifold {name!r}; expected one of {sorted(_MANIFOLDS)}")


# ---------------------------------------------------------------------------
# rotations: skew matrices, Rodrigues formula, axis-angle
# ---------------------------------------------------------------------------

def skew_matrix(w) -> np.ndarray:
    """Cross-product matrix [w]_x of a 3-vector (batched)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def skew_vector(W) -> np.ndarray:
    """Inverse of :func:`skew_matrix` for (nearly) skew 3x3 input."""
    W = np.asarray(W, dtype=float)
    return np.stack([W[..., 2, 1], W[..., 0, 2], W[..., 1, 0]], axis=-1)


def _rodrigues_from_skew(W: np.ndarray) -> np.ndarray:
    w = skew_vector(W)
    th = _row_norms(w)[..., None, None]
    th2 = th * th
    small = th < 1e-8
    safe = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    W2 = np.einsum("...ij,...jk->...ik", W, W)
    return np.eye(3) + a * W + b * W2


def matrix_exp_skew(W) -> np.ndarray:
    """Exponential of a skew-symmetric 3x3 matrix (a rotation).

    Uses the angle/axis closed form, which is exact for skew input.
    """
    W = np.asarray(W, dtype=float)
    defect = np.max(np.linalg.norm(W + np.swapaxes(W, -2, -1), axis=(-2, -1)))
    if defect > 1e-10:
        raise GeometryError(f"matrix is not skew-symmetric: defect {defect:.3e}")
    return _rodrigues_from_skew(W)


def rotation_from_axis_angle(theta: float, axis) -> np.ndarray:
    """Rotation by ``theta`` about a unit ``axis``, as a 3x3 matrix."""
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-10:
        raise GeometryError("rotation axis must be a unit vector")
    return _rodrigues_from_skew(skew_matrix(theta * axis))


def _clamp(x: float) -> float:
    return min(1.0, max(-1.0, x))


def so3_axis_angle(R) -> tuple[float, np.ndarray]:
    """Angle in [0, pi] and unit axis of a rotation matrix.

    Convention: the identity (angle below 1e-6) returns ``(0, (0, 0, 1))``.
    Near angle pi the generic formula degenerates and the axis is recovered
    from the dominant diagonal of ``(R + I)/2``, whose limit is ``e e^T``.
    """
    R = np.asarray(R, dtype=float).reshape(3, 3)
    theta = math.acos(_clamp((R[0, 0] + R[1, 1] + R[2, 2] - 1.0) / 2.0))
    if theta < 1e-6:
        return 0.0, np.array([0.0, 0.0, 1.0])
    if math.pi - theta > 1e-6:
        s = 2.0 * math.sin(theta)
        e = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / s
        return theta, e / np.linalg.norm(e)
    sym = 0.5 * (R + np.eye(3))
    i = int(np.argmax(np.diag(sym)))
    e = sym[:, i] / math.sqrt(max(sym[i, i], 1e-300))
    e = e / np.linalg.norm(e)
    # (R+I)/2 fixes e only up to sign; pick the sign matching sin(theta) >= 0
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if float(w @ e) < 0.0:
        e = -e
    return theta, e


# ---------------------------------------------------------------------------
# sphere Euler angles
# ---------------------------------------------------------------------------

def s2_from_euler(theta: float, phi: float) -> np.ndarray:
    """Point (sin t sin p, sin t cos p, cos t) on the unit sphere."""
    st = math.sin(theta)
    return np.array([st * math.sin(phi), st * math.cos(phi), math.cos(theta)])


def s2_euler_angles(p) -> tuple[float, float]:
    """Angles (arccos z, sign(x) arccos(y / sqrt(x^2 + y^2))).

    At the poles (x = y = 0) the azimuth is defined as 0.  ``sign(x)`` is
    taken as +1 at x = 0 so that (0, -1, 0) maps to azimuth pi.  arccos
    arguments are clamped to [-1, 1] against floating-point drift.
    """
    x, y, z = (float(c) for c in np.asarray(p, dtype=float))
    theta = math.acos(_clamp(z))
    r = math.hypot(x, y)
    if r == 0.0:
        return theta, 0.0
    phi = math.acos(_clamp(y / r))
    return theta, (phi if x >= 0.0 else -phi)


# ---------------------------------------------------------------------------
# geodesic test oracle
# ---------------------------------------------------------------------------

def geodesic_oracle(manifold: Manifold, p, v, t_end: float, dt: float) -> np.ndarray:
    """Integrate the geodesic ODE by a projected explicit Euler method.

    Steps position and velocity in ambient space, then re-projects the
    position to the manifold and the velocity to the tangent space.  This is
    an O(dt)-accurate cross-check for the closed-form exponential maps, kept
    independent of them on purpose.  Batched over leading axes.
    """
    if dt <= 0.0:
        raise GeometryError("dt must be positive")
    manifold.check_point(p, tol=1e-8)
    pos = np.array(p, dtype=float, copy=True)
    vel = np.array(v, dtype=float, copy=True)
    n_steps = int(round(t_end / dt))
    rem = t_end - n_steps * dt
    for _ in range(n_steps):
        pos = manifold.retract(pos + dt * vel)
        vel = manifold.tangent_project(pos, vel, check=False)
    if abs(rem) > 1e-15:
        pos = manifold.retract(pos + rem * vel)
        vel = manifold.tangent_project(pos, vel, check=False)
    return pos
