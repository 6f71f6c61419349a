"""Rigid-body transform algebra on unit quaternions.

Rotations are stored as canonicalized unit quaternions (w, x, y, z) and poses
as rotation + translation. Quaternions are renormalized after every operation
so drift stays bounded over long composition chains.

Conventions:
    - quaternion order is (w, x, y, z), scalar first
    - canonical sign: w >= 0; if w == 0 the first nonzero vector component
      is made positive (resolves the double cover deterministically)
    - ``compose(a, b)`` applies b first, then a (matrix convention)
    - interpolation is linear in translation and geodesic (shortest arc)
      in rotation
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Central tolerance table. Everything that checks pose algebra uses these.
TOLERANCES = {
    "algebra": 1e-9,        # group laws, round-trips, frame projections
    "continuity": 1e-12,    # slack on per-step bounds in assembled trajectories
    "attach_rel": 1e-12,    # rigid-attachment relative-pose drift
    "action_roundtrip": 1e-6,  # delta-action forward accumulation vs stored poses
}

_ANTIPODAL_EPS = 1e-12


def _canonical(q: np.ndarray) -> np.ndarray:
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    elif q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                if c < 0.0:
                    q = -q
                break
    return q


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion, canonicalized at construction."""

    quat: np.ndarray  # (w, x, y, z)

    def __post_init__(self):
        q = _canonical(np.asarray(self.quat, dtype=float))
        q.flags.writeable = False
        object.__setattr__(self, "quat", q)

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_axis_angle(rotvec) -> "Rotation":
        """Rotation from an axis-angle 3-vector (axis * angle, radians)."""
        v = np.asarray(rotvec, dtype=float)
        angle = float(np.linalg.norm(v))
        if angle < 1e-12:
            # first-order small-angle quaternion, renormalized by __post_init__
            return Rotation(np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]]))
        axis = v / angle
        h = 0.5 * angle
        s = math.sin(h)
        return Rotation(np.array([math.cos(h), s * axis[0], s * axis[1], s * axis[2]]))

    @staticmethod
    def from_matrix(m) -> "Rotation":
        """Rotation from a 3x3 orthonormal matrix (Shepperd's method)."""
        m = np.asarray(m, dtype=float)
        t = np.trace(m)
        if t > 0.0:
            r = math.sqrt(1.0 + t)
            w = 0.5 * r
            s = 0.5 / r
            q = np.array([w, (m[2, 1] - m[1, 2]) * s,
                          (m[0, 2] - m[2, 0]) * s,
                          (m[1, 0] - m[0, 1]) * s])
        else:
            i = int(np.argmax(np.diag(m)))
            j, k = (i + 1) % 3, (i + 2) % 3
            r = math.sqrt(1.0 + m[i, i] - m[j, j] - m[k, k])
            s = 0.5 / r
            q = np.empty(4)
            q[0] = (m[k, j] - m[j, k]) * s
            q[1 + i] = 0.5 * r
            q[1 + j] = (m[j, i] + m[i, j]) * s
            q[1 + k] = (m[k, i] + m[i, k]) * s
        return Rotation(q)

    def to_axis_angle(self) -> np.ndarray:
        """Axis-angle 3-vector with angle in [0, pi].

        At exactly pi the axis sign is ambiguous; the axis with first nonzero
        component positive is returned.
        """
        w = min(1.0, max(-1.0, float(self.quat[0])))
        vec = self.quat[1:]
        n = float(np.linalg.norm(vec))
        angle = 2.0 * math.atan2(n, w)
        if n < 1e-15:
            return np.zeros(3)
        axis = vec / n
        if angle > math.pi - _ANTIPODAL_EPS:
            axis = _canonical_axis(axis)
        return axis * angle

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.quat
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def multiply(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.quat
        w2, x2, y2, z2 = other.quat
        return Rotation(np.array([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]))

    def inverse(self) -> "Rotation":
        w, x, y, z = self.quat
        return Rotation(np.array([w, -x, -y, -z]))

    def rotate(self, v) -> np.ndarray:
        """Rotate a 3-vector."""
        v = np.asarray(v, dtype=float)
        u = self.quat[1:]
        w = self.quat[0]
        t = 2.0 * np.cross(u, v)
        return v + w * t + np.cross(u, t)

    def allclose(self, other: "Rotation", atol: float = TOLERANCES["algebra"]) -> bool:
        return geodesic_distance(self, other) <= atol


def _canonical_axis(axis: np.ndarray) -> np.ndarray:
    for c in axis:
        if c != 0.0:
            return -axis if c < 0.0 else axis
    return axis


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation then translation (meters)."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        t = np.array(self.translation, dtype=float).reshape(3)
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(Rotation.identity(), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return Pose(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.to_matrix()
        m[:3, 3] = self.translation
        return m

    def apply(self, point) -> np.ndarray:
        """Map a point from this pose's local frame to the parent frame."""
        return self.rotation.rotate(point) + self.translation


def compose(a: Pose, b: Pose) -> Pose:
    """Rigid transform "apply b, then a"."""
    return Pose(a.rotation.multiply(b.rotation),
                a.rotation.rotate(b.translation) + a.translation)


def inverse(a: Pose) -> Pose:
    rinv = a.rotation.inverse()
    return Pose(rinv, -rinv.rotate(a.translation))


def geodesic_distance(a: Rotation, b: Rotation) -> float:
    """Angle of the relative rotation, in [0, pi]. Sign-invariant."""
    rel = a.inverse().multiply(b)
    # canonicalization guarantees rel.w >= 0, so atan2 lands in [0, pi/2]
    return 2.0 * math.atan2(float(np.linalg.norm(rel.quat[1:])), float(rel.quat[0]))


def slerp(a: Rotation, b: Rotation, u: float) -> Rotation:
    """Geodesic interpolation along the shortest arc.

    Antipodal inputs (relative angle pi) are resolved by forcing the first
    nonzero component of the relative axis positive, which is deterministic.
    """
    if u == 0.0:
        return a
    if u == 1.0:
        return b
    rel = a.inverse().multiply(b)
    return a.multiply(Rotation.from_axis_angle(rel.to_axis_angle() * u))


def interpolate(a: Pose, b: Pose, u: float) -> Pose:
    """Blend two poses: linear translation, geodesic rotation.

    u=0 returns a and u=1 returns b exactly (bit-canonical).
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"interpolation parameter must be in [0, 1], got {u}")
    if u == 0.0:
        return a
    if u == 1.0:
        return b
    return Pose(slerp(a.rotation, b.rotation, u),
                (1.0 - u) * a.translation + u * b.translation)


def pose_allclose(a: Pose, b: Pose, atol: float = TOLERANCES["algebra"]) -> bool:
    return (float(np.max(np.abs(a.translation - b.translation))) <= atol
            and geodesic_distance(a.rotation, b.rotation) <= atol)


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Uniform random rotation (normalized 4D Gaussian)."""
    return Rotation(rng.standard_normal(4))


def random_pose(rng: np.random.Generator, trans_scale: float = 1.0) -> Pose:
    return Pose(random_rotation(rng), rng.uniform(-trans_scale, trans_scale, 3))
