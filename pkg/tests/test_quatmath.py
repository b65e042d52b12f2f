import numpy as np
import pytest
from hypothesis import given, strategies as st

from hingetrack import quatmath as qm


def random_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


unit_vec = st.builds(
    lambda seed: np.random.default_rng(seed).normal(size=3),
    st.integers(0, 2**31 - 1),
).map(lambda v: v / np.linalg.norm(v)).filter(lambda v: np.isfinite(v).all())


class TestBasics:
    def test_identity_is_unit(self):
        assert np.allclose(qm.IDENTITY, [1.0, 0.0, 0.0, 0.0])

    def test_normalize_scales_to_unit(self):
        q = qm.quat_normalize(np.array([2.0, 0.0, 0.0, 0.0]))
        assert np.allclose(q, qm.IDENTITY)

    def test_normalize_rejects_zero(self):
        with pytest.raises(ValueError):
            qm.quat_normalize(np.zeros(4))

    def test_multiply_identity(self):
        rng = np.random.default_rng(1)
        q = random_quat(rng)
        assert np.allclose(qm.quat_multiply(qm.IDENTITY, q), q)
        assert np.allclose(qm.quat_multiply(q, qm.IDENTITY), q)

    def test_conjugate_inverts_rotation(self):
        rng = np.random.default_rng(2)
        q = random_quat(rng)
        v = rng.normal(size=3)
        back = qm.quat_rotate(qm.quat_conjugate(q), qm.quat_rotate(q, v))
        assert np.allclose(back, v, atol=1e-12)


class TestRotation:
    def test_rotate_matches_matrix(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            q = random_quat(rng)
            v = rng.normal(size=3)
            assert np.allclose(qm.quat_rotate(q, v), qm.quat_to_matrix(q) @ v,
                               atol=1e-12)

    def test_axis_angle_quarter_turn(self):
        q = qm.quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2.0)
        assert np.allclose(qm.quat_rotate(q, [1.0, 0.0, 0.0]), [0.0, 1.0, 0.0],
                           atol=1e-12)

    def test_matrix_round_trip(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            q = random_quat(rng)
            q2 = qm.matrix_to_quat(qm.quat_to_matrix(q))
            # Compare up to the sign ambiguity of the double cover.
            assert min(np.linalg.norm(q - q2), np.linalg.norm(q + q2)) < 1e-12

    def test_matrix_to_quat_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            qm.matrix_to_quat(np.diag([1.0, 1.0, 2.0]))
        with pytest.raises(ValueError):
            qm.matrix_to_quat(np.diag([1.0, -1.0, 1.0]))  # det -1


class TestAngvel:
    def test_zero_rate_is_identity(self):
        q = qm.quat_from_angvel(np.zeros(3), 0.01)
        assert np.allclose(q, qm.IDENTITY)

    def test_angle_equals_rate_times_step(self):
        w = np.array([0.0, 0.0, 2.0])
        q = qm.quat_from_angvel(w, 0.1)
        expected = qm.quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.2)
        assert qm.angular_distance(q, expected) < 1e-12

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            qm.quat_from_angvel(np.ones(3), 0.0)


class TestMetric:
    def test_double_cover(self):
        rng = np.random.default_rng(5)
        q = random_quat(rng)
        assert qm.angular_distance(q, -q) == pytest.approx(0.0, abs=1e-12)

    def test_known_angle(self):
        q = qm.quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), 0.3)
        assert qm.angular_distance(qm.IDENTITY, q) == pytest.approx(0.3, abs=1e-9)

    @given(unit_vec, unit_vec)
    def test_quat_between_maps_vectors(self, a, b):
        q = qm.quat_between(a, b)
        assert np.allclose(qm.quat_rotate(q, a), b, atol=1e-9)

    def test_quat_between_antiparallel(self):
        a = np.array([1.0, 0.0, 0.0])
        q = qm.quat_between(a, -a)
        assert np.allclose(qm.quat_rotate(q, a), -a, atol=1e-12)


class TestJacobianHelper:
    def test_right_jacobian_small_angle_is_identity(self):
        assert np.allclose(qm.so3_right_jacobian(np.zeros(3)), np.eye(3))

    def test_right_jacobian_matches_finite_difference(self):
        # Jr relates a rotation-vector increment to the tangent of the
        # exponential map: exp(phi + d) ~ exp(phi) exp(Jr(phi) d).
        rng = np.random.default_rng(6)
        phi = rng.normal(size=3)
        jr = qm.so3_right_jacobian(phi)
        eps = 1e-7
        for axis in range(3):
            d = np.zeros(3)
            d[axis] = eps
            q1 = qm.quat_from_rotvec(phi + d)
            q0 = qm.quat_from_rotvec(phi)
            rel = qm.relative_quat(q0, q1)  # exp(Jr d) approximately
            vec = 2.0 * rel[1:] * np.sign(rel[0])
            assert np.allclose(vec / eps, jr[:, axis], atol=1e-5)
