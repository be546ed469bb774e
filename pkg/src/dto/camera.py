"""Pinhole camera with a vertical field-of-view parameterization.

No lens distortion and no extrinsics: every point lives in camera space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ImageSize:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise DomainError(f"image size must be integral, got {self.width}x{self.height}")
        if self.width < 1 or self.height < 1:
            raise DomainError(f"image size must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class CameraIntrinsics:
    vertical_fov: float
    focal_length: float
    principal_point: tuple[float, float]

    def __post_init__(self):
        if not 0.0 < self.vertical_fov < math.pi:
            raise DomainError(f"vertical_fov must lie in (0, pi), got {self.vertical_fov}")
        if not self.focal_length > 0.0:
            raise DomainError(f"focal_length must be positive, got {self.focal_length}")

    @classmethod
    def from_fov(cls, fov: float, size: ImageSize, principal_point=None) -> "CameraIntrinsics":
        pp = default_principal_point(size) if principal_point is None else principal_point
        return cls(fov, fov_to_focal(fov, size), (float(pp[0]), float(pp[1])))

    @classmethod
    def from_focal(cls, focal: float, size: ImageSize, principal_point=None) -> "CameraIntrinsics":
        pp = default_principal_point(size) if principal_point is None else principal_point
        return cls(focal_to_fov(focal, size), float(focal), (float(pp[0]), float(pp[1])))


def default_principal_point(size: ImageSize) -> tuple[float, float]:
    return (size.width / 2.0, size.height / 2.0)


def fov_to_focal(v: float, size: ImageSize) -> float:
    """Focal length in pixels for vertical FoV ``v`` (radians) over the image height."""
    if not 0.0 < v < math.pi:
        raise DomainError(f"vertical fov must lie in (0, pi), got {v}")
    return size.height / (2.0 * math.tan(v / 2.0))


def focal_to_fov(f: float, size: ImageSize) -> float:
    if not f > 0.0:
        raise DomainError(f"focal length must be positive, got {f}")
    return 2.0 * math.atan(size.height / (2.0 * f))


def project(point, cam: CameraIntrinsics) -> np.ndarray:
    """Project a camera-space point (or an (N, 3) array) to pixels."""
    p = np.asarray(point, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0.0):
        raise DomainError("cannot project a point with Z <= 0 (behind the camera)")
    cx, cy = cam.principal_point
    u = cam.focal_length * p[..., 0] / z + cx
    v = cam.focal_length * p[..., 1] / z + cy
    return np.stack([u, v], axis=-1)


def unproject(pixel, depth, cam: CameraIntrinsics) -> np.ndarray:
    """Lift pixel(s) at the given camera-space depth back to 3D."""
    px = np.asarray(pixel, dtype=float)
    z = np.asarray(depth, dtype=float)
    if np.any(z <= 0.0):
        raise DomainError("depth must be positive")
    cx, cy = cam.principal_point
    x = (px[..., 0] - cx) * z / cam.focal_length
    y = (px[..., 1] - cy) * z / cam.focal_length
    return np.stack([x, y, np.broadcast_to(z, x.shape)], axis=-1)
