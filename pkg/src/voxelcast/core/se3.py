"""SE(3) rigid transforms with quaternion accessors.

Conventions: matrices are 4x4 row-major float64, quaternions are (w, x, y, z),
rotations act on column vectors (p_world = R @ p_local + t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-6


class SE3ValidationError(ValueError):
    pass


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to a 3x3 rotation matrix."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise SE3ValidationError("zero-norm quaternion")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def matrix_to_quat(rot: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    rot = np.asarray(rot, dtype=np.float64)
    t = np.trace(rot)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (rot[2, 1] - rot[1, 2]) / s
        y = (rot[0, 2] - rot[2, 0]) / s
        z = (rot[1, 0] - rot[0, 1]) / s
    elif rot[0, 0] > rot[1, 1] and rot[0, 0] > rot[2, 2]:
        s = np.sqrt(1.0 + rot[0, 0] - rot[1, 1] - rot[2, 2]) * 2
        w = (rot[2, 1] - rot[1, 2]) / s
        x = 0.25 * s
        y = (rot[0, 1] + rot[1, 0]) / s
        z = (rot[0, 2] + rot[2, 0]) / s
    elif rot[1, 1] > rot[2, 2]:
        s = np.sqrt(1.0 + rot[1, 1] - rot[0, 0] - rot[2, 2]) * 2
        w = (rot[0, 2] - rot[2, 0]) / s
        x = (rot[0, 1] + rot[1, 0]) / s
        y = 0.25 * s
        z = (rot[1, 2] + rot[2, 1]) / s
    else:
        s = np.sqrt(1.0 + rot[2, 2] - rot[0, 0] - rot[1, 1]) * 2
        w = (rot[1, 0] - rot[0, 1]) / s
        x = (rot[0, 2] + rot[2, 0]) / s
        y = (rot[1, 2] + rot[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z], dtype=np.float64)
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


@dataclass(frozen=True)
class SE3Transform:
    """4x4 homogeneous rigid transform."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise SE3ValidationError(f"expected 4x4 matrix, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise SE3ValidationError("non-finite entries in transform")
        if not np.array_equal(m[3], np.array([0.0, 0.0, 0.0, 1.0])):
            raise SE3ValidationError("bottom row must be (0, 0, 0, 1)")
        rot = m[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=_ORTHO_TOL):
            raise SE3ValidationError("rotation block is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise SE3ValidationError("rotation block determinant is not 1")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def identity() -> "SE3Transform":
        return SE3Transform(np.eye(4))

    @staticmethod
    def from_parts(translation, quat) -> "SE3Transform":
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(np.asarray(quat, dtype=np.float64))
        m[:3, 3] = np.asarray(translation, dtype=np.float64)
        return SE3Transform(m)

    @staticmethod
    def from_xyz_yaw(x: float, y: float, z: float, yaw: float) -> "SE3Transform":
        c, s = np.cos(yaw), np.sin(yaw)
        m = np.eye(4)
        m[0, 0], m[0, 1] = c, -s
        m[1, 0], m[1, 1] = s, c
        m[:3, 3] = (x, y, z)
        return SE3Transform(m)

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3].copy()

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3].copy()

    @property
    def rotation_quat(self) -> np.ndarray:
        return matrix_to_quat(self.matrix[:3, :3])

    @property
    def yaw(self) -> float:
        return float(np.arctan2(self.matrix[1, 0], self.matrix[0, 0]))

    def inverse(self) -> "SE3Transform":
        rot_t = self.matrix[:3, :3].T
        m = np.eye(4)
        m[:3, :3] = rot_t
        m[:3, 3] = -rot_t @ self.matrix[:3, 3]
        return SE3Transform(m)

    def compose(self, other: "SE3Transform") -> "SE3Transform":
        """self o other: apply `other` first, then `self`."""
        return SE3Transform(self.matrix @ other.matrix)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:3, :3].T + self.matrix[:3, 3]

    def almost_equal(self, other: "SE3Transform", tol: float = 1e-6) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, atol=tol))


def se3_relative(pose_src: SE3Transform, pose_dst: SE3Transform) -> SE3Transform:
    """Transform mapping points in src's ego frame into dst's ego frame."""
    return pose_dst.inverse().compose(pose_src)


def quat_rotation_loss(q_pred: np.ndarray, q_gt: np.ndarray) -> float:
    """1 - |<q_pred, q_gt>| after normalization; 0 iff same rotation.

    The absolute inner product handles the quaternion double cover.
    """
    qp = np.asarray(q_pred, dtype=np.float64)
    qg = np.asarray(q_gt, dtype=np.float64)
    np_, ng = np.linalg.norm(qp), np.linalg.norm(qg)
    if np_ < 1e-12 or ng < 1e-12:
        raise SE3ValidationError("zero-norm quaternion in rotation loss")
    return float(1.0 - abs(np.dot(qp / np_, qg / ng)))
