import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tvflow import (GeometryError, SO3, Sphere, geodesic_oracle, get_manifold,
                    matrix_exp_skew, rotation_from_axis_angle,
                    s2_euler_angles, s2_from_euler, skew_matrix, skew_vector,
                    so3_axis_angle)

# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------

unit_vectors = st.builds(
    lambda seed: np.random.default_rng(seed).standard_normal(3),
    st.integers(0, 2**31)).map(lambda v: v / np.linalg.norm(v)).filter(
        lambda v: np.isfinite(v).all())

angles = st.floats(min_value=0.1, max_value=3.0)


def _seeded_rng(seed):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# tangent / normal projections
# ---------------------------------------------------------------------------

def test_tangent_project_sphere_example(sphere):
    out = sphere.tangent_project(np.array([1.0, 0, 0]), np.array([5.0, 2, 3]))
    np.testing.assert_allclose(out, [0, 2, 3], atol=1e-15)


def test_tangent_project_sphere_already_tangent(sphere):
    out = sphere.tangent_project(np.array([1.0, 0, 0]), np.array([0.0, 1, 0]))
    np.testing.assert_allclose(out, [0, 1, 0], atol=1e-15)


def test_tangent_project_so3_identity_is_skew_part(so3, rng):
    # brute-force oracle: project onto an orthonormal basis of the skew
    # matrices under the trace inner product
    a = rng.standard_normal((3, 3))
    out = so3.tangent_project(np.eye(3).reshape(9), a.reshape(9)).reshape(3, 3)
    np.testing.assert_allclose(out, (a - a.T) / 2, atol=1e-14)
    basis = [skew_matrix(e) / math.sqrt(2.0) for e in np.eye(3)]
    brute = sum(np.tensordot(a, b) * b for b in basis)
    np.testing.assert_allclose(out, brute, atol=1e-14)


def test_normal_project_examples(sphere, so3, rng):
    out = sphere.normal_project(np.array([1.0, 0, 0]), np.array([5.0, 2, 3]))
    np.testing.assert_allclose(out, [5, 0, 0], atol=1e-15)
    a = rng.standard_normal((3, 3))
    out = so3.normal_project(np.eye(3).reshape(9), a.reshape(9)).reshape(3, 3)
    np.testing.assert_allclose(out, (a + a.T) / 2, atol=1e-14)
    p = sphere.random_point(rng)
    v = sphere.random_tangent(rng, p)
    np.testing.assert_allclose(sphere.normal_project(p, v), 0, atol=1e-14)


@pytest.mark.parametrize("name", ["s2", "so3"])
def test_projection_properties(name, rng):
    m = get_manifold(name)
    p = m.random_point(rng, 500)
    v = rng.standard_normal((500, m.ambient_dim))
    t = m.tangent_project(p, v)
    n = m.normal_project(p, v)
    # idempotence, decomposition, orthogonality
    assert np.abs(m.tangent_project(p, t) - t).max() < 1e-12
    assert np.abs(t + n - v).max() < 1e-12
    assert np.abs(np.einsum("ij,ij->i", t, n)).max() < 1e-10
    assert m.tangent_defect(p, t).max() < 1e-10


def test_projection_rejects_bad_base_point(sphere):
    with pytest.raises(GeometryError):
        sphere.tangent_project(np.array([2.0, 0, 0]), np.array([1.0, 0, 0]))
    with pytest.raises(GeometryError):
        sphere.exp_map(np.array([0.5, 0, 0]), np.array([0.0, 0, 0]))


# ---------------------------------------------------------------------------
# exponential maps
# ---------------------------------------------------------------------------

def test_exp_sphere_quarter_turn(sphere):
    out = sphere.exp_map(np.array([1.0, 0, 0]), np.array([0, math.pi / 2, 0]))
    np.testing.assert_allclose(out, [0, 1, 0], atol=1e-15)


@pytest.mark.parametrize("name", ["s2", "so3"])
def test_exp_zero_is_identity(name, rng):
    m = get_manifold(name)
    p = m.random_point(rng, 20)
    np.testing.assert_array_equal(m.exp_map(p, np.zeros_like(p)), p)


def test_exp_so3_quarter_turn(so3):
    v = (skew_matrix([0, 0, 1.0]) * (math.pi / 2)).reshape(9)
    out = so3.exp_map(np.eye(3).reshape(9), v).reshape(3, 3)
    np.testing.assert_allclose(out, [[0, -1, 0], [1, 0, 0], [0, 0, 1]],
                               atol=1e-15)


def test_exp_sphere_matches_matrix_exponential_route(sphere, rng):
    # the closed form must agree with exp(v p^T - p v^T) p
    for _ in range(50):
        p = sphere.random_point(rng)
        v = sphere.random_tangent(rng, p)
        w = np.outer(v, p) - np.outer(p, v)
        series = np.eye(3)
        term = np.eye(3)
        for k in range(1, 31):
            term = term @ w / k
            series = series + term
        np.testing.assert_allclose(sphere.exp_map(p, v), series @ p, atol=1e-10)


@pytest.mark.parametrize("name", ["s2", "so3"])
def test_exp_stays_on_manifold(name, rng):
    m = get_manifold(name)
    p = m.random_point(rng, 300)
    v = m.random_tangent(rng, p)
    for t in (0.25, 0.5, 1.0):
        assert m.point_defect(m.exp_map(p, t * v)).max() < 1e-10


@pytest.mark.parametrize("name", ["s2", "so3"])
def test_geodesic_speed_is_constant(name, rng):
    m = get_manifold(name)
    p = m.random_point(rng, 200)
    v = m.random_tangent(rng, p)
    h = 1e-5
    for t in (0.3, 0.7):
        speed = np.linalg.norm(
            (m.exp_map(p, (t + h) * v) - m.exp_map(p, (t - h) * v)) / (2 * h),
            axis=1)
        assert np.abs(speed - np.linalg.norm(v, axis=1)).max() < 1e-6


# ---------------------------------------------------------------------------
# skew exponential and axis-angle
# ---------------------------------------------------------------------------

def test_matrix_exp_skew_examples():
    np.testing.assert_array_equal(matrix_exp_skew(np.zeros((3, 3))), np.eye(3))
    out = matrix_exp_skew(skew_matrix([0, 0, 1.0]) * (math.pi / 2))
    np.testing.assert_allclose(out, [[0, -1, 0], [1, 0, 0], [0, 0, 1]],
                               atol=1e-15)


@given(unit_vectors)
def test_matrix_exp_skew_full_turn(e):
    np.testing.assert_allclose(matrix_exp_skew(skew_matrix(e) * 2 * math.pi),
                               np.eye(3), atol=1e-10)


def test_matrix_exp_skew_vs_power_series(rng):
    for _ in range(100):
        w = rng.standard_normal(3)
        w *= rng.uniform(0, 4.0) / np.linalg.norm(w)
        mat = skew_matrix(w)
        series = np.eye(3)
        term = np.eye(3)
        for k in range(1, 31):
            term = term @ mat / k
            series = series + term
        out = matrix_exp_skew(mat)
        np.testing.assert_allclose(out, series, atol=1e-10)
        assert np.abs(out.T @ out - np.eye(3)).max() < 1e-10


def test_matrix_exp_skew_rejects_non_skew():
    with pytest.raises(GeometryError):
        matrix_exp_skew(np.eye(3))


def test_skew_matrix_round_trip(rng):
    w = rng.standard_normal((10, 3))
    np.testing.assert_array_equal(skew_vector(skew_matrix(w)), w)


def test_axis_angle_identity_convention():
    theta, e = so3_axis_angle(np.eye(3))
    assert theta == 0.0
    np.testing.assert_array_equal(e, [0, 0, 1])


def test_axis_angle_quarter_turn():
    theta, e = so3_axis_angle(np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]]))
    assert abs(theta - math.pi / 2) < 1e-12
    np.testing.assert_allclose(e, [0, 0, 1], atol=1e-12)


@given(angles, unit_vectors)
def test_axis_angle_round_trip(theta, e):
    r = rotation_from_axis_angle(theta, e)
    theta2, e2 = so3_axis_angle(r)
    assert abs(theta - theta2) < 1e-8
    np.testing.assert_allclose(e, e2, atol=1e-8)


@given(unit_vectors, st.floats(min_value=1e-5, max_value=9e-4))
def test_axis_angle_near_pi_fallback(e, eps):
    r = rotation_from_axis_angle(math.pi - eps, e)
    theta2, e2 = so3_axis_angle(r)
    r2 = rotation_from_axis_angle(theta2, e2)
    np.testing.assert_allclose(r, r2, atol=1e-7)


def test_rotation_from_axis_angle_rejects_non_unit():
    with pytest.raises(GeometryError):
        rotation_from_axis_angle(1.0, [1.0, 1.0, 0.0])


# ---------------------------------------------------------------------------
# sphere Euler angles
# ---------------------------------------------------------------------------

def test_s2_euler_angles_examples():
    assert s2_euler_angles([0.0, 0, 1]) == (0.0, 0.0)
    s = math.sin(math.pi / 4)
    theta, phi = s2_euler_angles([s * s, s * math.cos(math.pi / 4),
                                  math.cos(math.pi / 4)])
    assert abs(theta - math.pi / 4) < 1e-12 and abs(phi - math.pi / 4) < 1e-12
    theta, phi = s2_euler_angles([1.0, 0, 0])
    assert abs(theta - math.pi / 2) < 1e-12 and abs(phi - math.pi / 2) < 1e-12


def test_s2_from_euler_examples():
    np.testing.assert_array_equal(s2_from_euler(0.0, 1.234), [0, 0, 1])
    np.testing.assert_allclose(s2_from_euler(math.pi / 2, math.pi / 2),
                               [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(s2_from_euler(math.pi / 4, math.pi / 2),
                               [math.sqrt(0.5), 0, math.sqrt(0.5)], atol=1e-15)


def test_s2_from_euler_lands_on_sphere(rng):
    for theta, phi in rng.uniform(-10, 10, size=(200, 2)):
        assert abs(np.linalg.norm(s2_from_euler(theta, phi)) - 1) < 1e-12


@given(st.integers(0, 2**31))
def test_s2_euler_round_trip(seed):
    p = Sphere().random_point(_seeded_rng(seed))
    if abs(p[2]) > 1 - 1e-9:        # pole convention breaks invertibility
        return
    theta, phi = s2_euler_angles(p)
    np.testing.assert_allclose(s2_from_euler(theta, phi), p, atol=1e-9)


def test_s2_euler_negative_y_meridian():
    theta, phi = s2_euler_angles([0.0, -1.0, 0.0])
    np.testing.assert_allclose(s2_from_euler(theta, phi), [0, -1, 0],
                               atol=1e-12)


# ---------------------------------------------------------------------------
# geodesic oracle
# ---------------------------------------------------------------------------

def test_geodesic_oracle_sphere_quarter_turn(sphere):
    out = geodesic_oracle(sphere, np.array([1.0, 0, 0]),
                          np.array([0, math.pi / 2, 0]), 1.0, 1e-5)
    np.testing.assert_allclose(out, [0, 1, 0], atol=1e-3)


def test_geodesic_oracle_so3_quarter_turn(so3):
    v = (skew_matrix([0, 0, 1.0]) * (math.pi / 2)).reshape(9)
    out = geodesic_oracle(so3, np.eye(3).reshape(9), v, 1.0, 1e-5)
    expect = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]]).reshape(9)
    assert np.abs(out - expect).max() < 1e-3


def test_geodesic_oracle_zero_velocity(sphere, rng):
    p = sphere.random_point(rng)
    np.testing.assert_array_equal(
        geodesic_oracle(sphere, p, np.zeros(3), 1.0, 1e-3), p)


@pytest.mark.parametrize("name", ["s2", "so3"])
def test_geodesic_oracle_matches_exp(name, rng):
    m = get_manifold(name)
    p = m.random_point(rng, 50)
    v = m.random_tangent(rng, p)
    v *= (rng.uniform(0.1, 1.0, size=50) / np.linalg.norm(v, axis=1))[:, None]
    dt = 1e-4
    out = geodesic_oracle(m, p, v, 1.0, dt)
    err = np.linalg.norm(out - m.exp_map(p, v), axis=1).max()
    assert err < 5 * dt


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def test_sphere_constants(sphere):
    c = sphere.constants()
    assert (c.curv, c.diam, c.lfs) == (1.0, 2.0, 1.0)
    assert c.c_m_upper == 8.0
    assert c.source == "closed-form"
    assert c.c_m_upper == 2 * c.curv * max(1, c.diam / c.lfs) ** 2


def test_sphere_constants_dominate_samples(sphere, rng):
    # brute-force sampling under each closed-form constant
    p = sphere.random_point(rng, 2000)
    q = sphere.random_point(rng, 2000)
    assert np.linalg.norm(p - q, axis=1).max() <= 2.0 + 1e-12
    v = sphere.random_tangent(rng, p)
    h = 1e-4
    acc = (sphere.exp_map(p, h * v) - 2 * p + sphere.exp_map(p, -h * v)) / h**2
    speed2 = np.einsum("ij,ij->i", v, v)
    ok = speed2 > 1e-6
    ratio = np.linalg.norm(acc, axis=1)[ok] / speed2[ok]
    assert ratio.max() <= 1.0 + 1e-4


def test_so3_constants_are_empirical(so3):
    c = so3.constants()
    assert c.source == "empirical"
    assert c.lfs is None
    assert c.c_m_upper == pytest.approx(2 * 0.3535534)
    assert 0.70 < c.curv < 0.71
    assert 2.82 < c.diam < 2.83


@pytest.mark.parametrize("name,expected", [("s2", 0.5), ("so3", 0.35355339)])
def test_c_m_empirical_small_sample(name, expected):
    m = get_manifold(name)
    est = m.c_m_empirical(20_000, seed=3)
    assert est == pytest.approx(expected, abs=1e-3)
    assert est <= m.constants().c_m_upper


def test_get_manifold_rejects_unknown():
    with pytest.raises(GeometryError):
        get_manifold("torus")


def test_check_point_rejects_reflection(so3):
    reflection = np.diag([1.0, 1.0, -1.0]).reshape(9)
    with pytest.raises(GeometryError):
        so3.check_point(reflection)


def test_project_to_manifold_snaps_back(so3, rng):
    r = so3.random_point(rng, 20)
    noisy = r + 1e-8 * rng.standard_normal(r.shape)
    fixed = so3.project_to_manifold(noisy)
    assert so3.point_defect(fixed).max() < 1e-14
    assert np.abs(fixed - r).max() < 1e-7
