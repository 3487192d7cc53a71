"""Unit-quaternion helpers.

Convention everywhere: scalar-first Hamilton quaternions [w, x, y, z]
mapping body to world, so rotate(q, v_body) = v_world.  All functions
broadcast over leading axes; the quaternion lives on the last axis.
"""

from __future__ import annotations

import numpy as np


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b, batched over leading axes."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over the last axis.

    Same multiply-subtract arithmetic as np.cross (bitwise-identical
    results) without its axis bookkeeping, which dominates on the small
    batches the control loop feeds through here.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v by q (body -> world for attitude quaternions).

    Uses v' = v + w*t + qv x t with t = 2 qv x v, which is exact for the
    identity quaternion (no roundoff enters a no-op rotation).
    """
    qv = q[..., 1:]
    w = q[..., 0:1]
    t = 2.0 * cross3(qv, v)
    return v + w * t + cross3(qv, t)


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix of q, batched."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def quat_exp_map(theta: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) to unit quaternion, batched.

    Small angles use the series of sin(a)/a to stay smooth through zero.
    """
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta, axis=-1, keepdims=True)
    half = 0.5 * angle
    small = angle < 1e-8
    # sin(half)/angle, with series 1/2 - angle^2/48 near zero
    safe = np.where(small, 1.0, angle)
    scale = np.where(small, 0.5 - angle * angle / 48.0, np.sin(half) / safe)
    w = np.cos(half)
    return np.concatenate([w, scale * theta], axis=-1)


def quat_log_map(q: np.ndarray) -> np.ndarray:
    """Unit quaternion to rotation vector, batched; picks the short arc."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., 0:1] < 0.0, -q, q)
    vec = q[..., 1:]
    n = np.linalg.norm(vec, axis=-1, keepdims=True)
    w = q[..., 0:1]
    angle = 2.0 * np.arctan2(n, w)
    small = n < 1e-12
    safe = np.where(small, 1.0, n)
    # angle/n -> 2/w as n -> 0
    scale = np.where(small, 2.0 / np.maximum(w, 1e-300), angle / safe)
    return scale * vec


def rotation_about_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
