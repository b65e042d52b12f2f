"""Quaternion and small-vector algebra used throughout the package.

Conventions:
    - Quaternions are length-4 numpy arrays [w, x, y, z] (scalar first),
      Hamilton product, unit norm.
    - q maps body-frame coordinates to reference-frame coordinates:
      v_r = q (0, v_b) q*.
    - Rotation matrices are 3x3 with R(q) v_b = v_r.
    - Vectors are length-3 numpy arrays.

All functions are pure and allocate their outputs; nothing is mutated.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

#: Below this rotation-rate norm (rad/s) integration returns the identity
#: increment, avoiding the 0/0 in the axis computation.
SMALL_RATE = 1e-12


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < SMALL_RATE:
        raise ValueError("cannot normalize a near-zero quaternion")
    return q / n


def quat_multiply(a, b):
    """Hamilton product a ⊗ b, renormalized."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    out = np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])
    return out / np.linalg.norm(out)


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q, v):
    """Rotate v from the body frame into the reference frame: q (0,v) q*."""
    w = q[0]
    u = q[1:]
    # Expanded form of q (0,v) q*; one cross product fewer than composing.
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < SMALL_RATE:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis / n))


def quat_from_rotvec(phi):
    """Exponential map: rotation vector (rad) to unit quaternion."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    if angle < SMALL_RATE:
        return IDENTITY.copy()
    return quat_from_axis_angle(phi, angle)


def quat_from_angvel(omega, ts):
    """One-step integration increment for body rate omega over sample time ts.

    Axis omega/|omega|, angle |omega|*ts; identity for near-zero rates.
    """
    if ts <= 0.0:
        raise ValueError("sample time must be positive")
    return quat_from_rotvec(np.asarray(omega, dtype=float) * ts)


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m, tol=1e-9):
    """Rotation matrix to unit quaternion (Shepperd's method).

    Raises ValueError if m is not orthonormal with determinant +1 within tol.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    if not np.allclose(m.T @ m, np.eye(3), atol=tol):
        raise ValueError("matrix is not orthonormal")
    if abs(np.linalg.det(m) - 1.0) > tol:
        raise ValueError("matrix determinant is not +1")

    tr = np.trace(m)
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (m[2, 1] - m[1, 2]) / s,
            (m[0, 2] - m[2, 0]) / s,
            (m[1, 0] - m[0, 1]) / s,
        ])
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + m[i, i] - m[j, j] - m[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return quat_normalize(q)


def cross_matrix(v):
    """Skew-symmetric matrix S with S @ w == v x w."""
    x, y, z = v
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def angular_distance(a, b):
    """Smallest rotation angle (rad, in [0, pi]) separating orientations a, b.

    Invariant under the quaternion double cover: d(a, b) == d(a, -b).
    """
    d = abs(float(np.dot(a, b)))
    return 2.0 * np.arccos(min(1.0, d))


def relative_quat(a, b):
    """Relative rotation a* ⊗ b, satisfying a ⊗ result == b."""
    return quat_multiply(quat_conjugate(a), b)


def quat_between(v_from, v_to):
    """Shortest rotation taking unit vector v_from onto unit vector v_to."""
    v_from = np.asarray(v_from, dtype=float)
    v_to = np.asarray(v_to, dtype=float)
    c = np.cross(v_from, v_to)
    d = float(np.dot(v_from, v_to))
    n = np.linalg.norm(c)
    if n < 1e-12:
        if d > 0.0:
            return IDENTITY.copy()
        # Antiparallel: rotate 180 degrees about any perpendicular axis.
        helper = np.array([1.0, 0.0, 0.0])
        if abs(v_from[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(v_from, helper)
        return quat_from_axis_angle(axis, np.pi)
    return quat_from_axis_angle(c, np.arctan2(n, d))


def so3_right_jacobian(phi):
    """Right Jacobian of the SO(3) exponential map at rotation vector phi.

    exp((phi + d)^) == exp(phi^) exp((Jr(phi) d)^) to first order in d.
    """
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    s = cross_matrix(phi)
    if angle < 1e-7:
        return np.eye(3) - 0.5 * s + (s @ s) / 6.0
    a2 = angle * angle
    return (
        np.eye(3)
        - (1.0 - np.cos(angle)) / a2 * s
        + (angle - np.sin(angle)) / (a2 * angle) * (s @ s)
    )
