"""Coordinate frames and the conversions between them.

Four frames exist in the system:

* APF    -- LVLH-aligned, centered on the target at scenario start: x along
            the target's velocity direction, z nadir, y completing the
            right-handed triad.  The frame does not rotate with the target.
* CAMERA -- pinhole camera frame: z along the optical axis, x right, y down.
* TRACKER-- the motion tracker's frame (aligned with APF in this simulator).
* DRONE  -- the vehicles' command frame, with y and z opposite to APF.

All positions are in meters.  Quaternions are scalar-last ``(x, y, z, w)``,
right-handed, active rotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

Quat = tuple[float, float, float, float]

IDENTITY_QUAT: Quat = (0.0, 0.0, 0.0, 1.0)

UNIT_NORM_TOL = 1e-9


class InvalidPoint(ValueError):
    """A point or vector with non-finite components was supplied."""


class FrameTag(Enum):
    APF = "apf"
    CAMERA = "camera"
    TRACKER = "tracker"
    DRONE = "drone"


@dataclass(frozen=True)
class Vec3:
    """A 3-vector in meters (or m/s, m/s^2 by context).  Components finite."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise InvalidPoint(f"non-finite components: ({self.x}, {self.y}, {self.z})")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))


ZERO = Vec3(0.0, 0.0, 0.0)
UNIT_X = Vec3(1.0, 0.0, 0.0)
UNIT_Y = Vec3(0.0, 1.0, 0.0)
UNIT_Z = Vec3(0.0, 0.0, 1.0)


def quat_normalize(q: Quat) -> Quat:
    n = math.sqrt(sum(c * c for c in q))
    if n == 0.0:
        raise ValueError("zero-norm quaternion")
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def quat_conjugate(q: Quat) -> Quat:
    return (-q[0], -q[1], -q[2], q[3])


def quat_multiply(a: Quat, b: Quat) -> Quat:
    """Hamilton product a*b, both scalar-last."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return (
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    )


def quat_from_axis_angle(axis: Vec3, angle_rad: float) -> Quat:
    n = axis.norm()
    if n == 0.0:
        raise ValueError("zero axis")
    s = math.sin(angle_rad / 2.0) / n
    return (axis.x * s, axis.y * s, axis.z * s, math.cos(angle_rad / 2.0))


def quat_to_matrix(q: Quat) -> np.ndarray:
    x, y, z, w = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotate(q: Quat, v: Vec3) -> Vec3:
    x, y, z, w = q
    # q * (v, 0) * q^-1 expanded
    t = Vec3(
        2.0 * (y * v.z - z * v.y),
        2.0 * (z * v.x - x * v.z),
        2.0 * (x * v.y - y * v.x),
    )
    return Vec3(
        v.x + w * t.x + (y * t.z - z * t.y),
        v.y + w * t.y + (z * t.x - x * t.z),
        v.z + w * t.z + (x * t.y - y * t.x),
    )


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotate by ``orientation`` then translate by ``position``.

    ``transform`` maps local-frame points into the parent frame;
    ``inverse_transform`` goes the other way.
    """

    position: Vec3
    orientation: Quat = IDENTITY_QUAT

    def __post_init__(self):
        n = math.sqrt(sum(c * c for c in self.orientation))
        if abs(n - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"quaternion norm {n} deviates from 1 by more than {UNIT_NORM_TOL}")

    def transform(self, point: Vec3) -> Vec3:
        return quat_rotate(self.orientation, point) + self.position

    def inverse_transform(self, point: Vec3) -> Vec3:
        return quat_rotate(quat_conjugate(self.orientation), point - self.position)

    def compose(self, other: "Pose") -> "Pose":
        """Pose of ``other`` expressed through this pose (this applied after other)."""
        return Pose(
            self.transform(other.position),
            quat_normalize(quat_multiply(self.orientation, other.orientation)),
        )


def apf_from_camera(point: Vec3, camera_pose: Pose) -> Vec3:
    """Map a camera-frame point into the APF frame.

    ``camera_pose`` is the camera's pose expressed in the APF frame.
    """
    if not isinstance(point, Vec3):
        point = Vec3(*point)
    return camera_pose.transform(point)


def camera_from_apf(point: Vec3, camera_pose: Pose) -> Vec3:
    """Inverse of :func:`apf_from_camera`."""
    if not isinstance(point, Vec3):
        point = Vec3(*point)
    return camera_pose.inverse_transform(point)


def drone_from_apf(v: Vec3) -> Vec3:
    """APF -> drone command frame: y and z flip sign.  Self-inverse."""
    return Vec3(v.x, -v.y, -v.z)


# The conversion is an involution, so the inverse is the same map.
apf_from_drone = drone_from_apf
