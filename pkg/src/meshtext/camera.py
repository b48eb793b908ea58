"""Pinhole camera model: intrinsics, poses, projection and back-projection.

Camera frame is right-handed with +z forward, +x right, +y down. World is
z-up. A pose with yaw=pitch=roll=0 looks along world +x; yaw rotates the
forward vector from +x toward +y (about world up), positive pitch tilts it
toward +z, and roll spins about the forward axis. Depth values are
camera-space z, not ray distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError("principal point must lie inside the image")

    def back_projection(self) -> np.ndarray:
        """Matrix B with B @ (x, y, 1) = camera-space direction at unit depth."""
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class CameraPose:
    """Camera position plus yaw/pitch/roll in degrees."""

    position: np.ndarray
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ValidationError("pose position must be a finite 3-vector")
        for a in (self.yaw, self.pitch, self.roll):
            if not math.isfinite(a):
                raise ValidationError("pose angles must be finite")
        object.__setattr__(self, "position", p)

    def rotation(self) -> np.ndarray:
        """Camera-to-world rotation; columns are (right, down, forward)."""
        psi = math.radians(self.yaw)
        theta = math.radians(self.pitch)
        phi = math.radians(self.roll)
        forward = np.array(
            [
                math.cos(theta) * math.cos(psi),
                math.cos(theta) * math.sin(psi),
                math.sin(theta),
            ]
        )
        # Horizontal right vector; well-defined even at pitch = +-90.
        right0 = np.array([math.sin(psi), -math.cos(psi), 0.0])
        down0 = np.cross(forward, right0)
        right = math.cos(phi) * right0 + math.sin(phi) * down0
        down = -math.sin(phi) * right0 + math.cos(phi) * down0
        return np.column_stack([right, down, forward])

    @property
    def forward(self) -> np.ndarray:
        return self.rotation()[:, 2]

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.position) @ self.rotation()

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation().T + self.position


def project(point, intrinsics: CameraIntrinsics, pose: CameraPose):
    """Pinhole projection; None when the point is at or behind the camera.

    Returns ((pixel_x, pixel_y), depth) with depth the camera-space z.
    """
    cam = pose.world_to_camera(np.asarray(point, dtype=np.float64))
    z = float(cam[2])
    if z <= 0.0:
        return None
    px = intrinsics.fx * float(cam[0]) / z + intrinsics.cx
    py = intrinsics.fy * float(cam[1]) / z + intrinsics.cy
    return (px, py), z


def unproject(pixel, depth: float, intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    """World point at the given pixel and camera-space depth."""
    if depth <= 0.0:
        raise ValueError("depth must be > 0")
    x, y = float(pixel[0]), float(pixel[1])
    cam = depth * np.array([(x - intrinsics.cx) / intrinsics.fx, (y - intrinsics.cy) / intrinsics.fy, 1.0])
    return pose.camera_to_world(cam)
