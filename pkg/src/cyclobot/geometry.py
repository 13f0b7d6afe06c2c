"""Quaternion and rotation helpers shared across the package.

Quaternions are numpy arrays of shape (4,) ordered [w, x, y, z] with the
scalar part first.  All angles are radians.
"""

from __future__ import annotations

import numpy as np


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_norm(q: np.ndarray) -> float:
    return float(np.sqrt(np.dot(q, q)))


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = quat_norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize a zero quaternion")
    return np.asarray(q, dtype=float) / n


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b, composing rotations (a applied after b).

    Terms are grouped so that mutually cancelling product pairs are
    summed adjacently; q * conj(q) then yields exact zeros in the
    vector part, which clutch-engage exactness relies on.
    """
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            (aw * bw - ax * bx) - (ay * by + az * bz),
            (aw * bx + ax * bw) + (ay * bz - az * by),
            (aw * by + ay * bw) + (az * bx - ax * bz),
            (aw * bz + az * bw) + (ax * by - ay * bx),
        ]
    )


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by unit quaternion q.

    Uses the expanded form v + 2*qv x (qv x v + w*v), which avoids
    building the full rotation matrix.
    """
    qv = np.asarray(q[1:4], dtype=float)
    v = np.asarray(v, dtype=float)
    t = 2.0 * np.cross(qv, v)
    return v + q[0] * t + np.cross(qv, t)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Unit quaternion for a rotation of `angle` about a unit `axis`."""
    half = 0.5 * angle
    s = np.sin(half)
    axis = np.asarray(axis, dtype=float)
    return np.array([np.cos(half), s * axis[0], s * axis[1], s * axis[2]])


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Quaternion for fixed-axis XYZ (roll, pitch, yaw) Euler angles."""
    qx = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), roll)
    qy = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), pitch)
    qz = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
    return quat_multiply(qz, quat_multiply(qy, qx))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix for a unit quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_to_rotation_vector(q: np.ndarray) -> np.ndarray:
    """Axis-angle vector (axis * angle) for a unit quaternion.

    The sign of q is canonicalized first so the returned angle is in
    [0, pi] and the map is continuous near identity.
    """
    if q[0] < 0.0:
        q = -q
    vn = float(np.linalg.norm(q[1:4]))
    if vn < 1e-12:
        # Small-angle regime: sin(a/2) ~ a/2, so axis*angle ~ 2*qv.
        return 2.0 * np.asarray(q[1:4], dtype=float)
    angle = 2.0 * np.arctan2(vn, float(q[0]))
    return (angle / vn) * np.asarray(q[1:4], dtype=float)


def random_unit_quat(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion (for fuzz tests)."""
    q = rng.normal(size=4)
    n = np.linalg.norm(q)
    while n < 1e-9:
        q = rng.normal(size=4)
        n = np.linalg.norm(q)
    return q / n
