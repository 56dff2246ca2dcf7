"""Spherical geometry shared by the sky model, panoramas and the probe scene.

World frame is y-up. A direction with zenith angle ``theta`` (measured from +y)
and azimuth ``phi`` is::

    (sin(theta) cos(phi), cos(theta), sin(theta) sin(phi))

so azimuth increases counter-clockwise from +x when looking down on the xz
plane from above. Equirectangular texel ``(u, v)`` of a ``height x 2*height``
map sits at ``theta = pi (v + 0.5) / height`` and
``phi = 2 pi (u + 0.5) / width``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

TWO_PI = 2.0 * math.pi
UNIT_TOL = 1e-6


@dataclass(frozen=True)
class SunPosition:
    """Sun zenith angle and azimuth, radians."""

    zenith_angle: float
    azimuth: float

    def __post_init__(self):
        z = float(self.zenith_angle)
        if not (0.0 <= z <= math.pi / 2 + 1e-12) or not math.isfinite(z):
            raise InvalidInputError(f"sun zenith angle {z} outside [0, pi/2]")
        if not math.isfinite(float(self.azimuth)):
            raise InvalidInputError("sun azimuth must be finite")
        object.__setattr__(self, "zenith_angle", min(z, math.pi / 2))
        object.__setattr__(self, "azimuth", float(self.azimuth) % TWO_PI)

    @property
    def elevation(self) -> float:
        return math.pi / 2 - self.zenith_angle

    @property
    def direction(self) -> np.ndarray:
        return spherical_to_direction(self.zenith_angle, self.azimuth)

    @classmethod
    def from_direction(cls, direction) -> "SunPosition":
        theta, phi = direction_to_spherical(np.asarray(direction, dtype=float))
        return cls(float(min(theta, math.pi / 2)), float(phi))


def spherical_to_direction(theta, phi) -> np.ndarray:
    """Unit vectors for (broadcast) zenith/azimuth arrays; last axis is xyz."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), np.cos(theta), st * np.sin(phi)], axis=-1)


def direction_to_spherical(d: np.ndarray):
    """Inverse of :func:`spherical_to_direction`; azimuth in [0, 2pi)."""
    d = np.asarray(d, dtype=float)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[..., 2], d[..., 0]), TWO_PI)
    return theta, phi


def check_unit(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    if d.shape[-1:] != (3,):
        raise InvalidInputError(f"direction must have a trailing axis of 3, got {d.shape}")
    norm = np.linalg.norm(d, axis=-1)
    if not np.all(np.abs(norm - 1.0) <= UNIT_TOL):
        raise InvalidInputError("direction is not unit length")
    return d


def texel_angles(height: int):
    """Row zenith angles (height,) and column azimuths (2*height,) of texel centres."""
    width = 2 * height
    theta = math.pi * (np.arange(height) + 0.5) / height
    phi = TWO_PI * (np.arange(width) + 0.5) / width
    return theta, phi


def texel_direction(u: int, v: int, width: int, height: int) -> np.ndarray:
    if not (0 <= u < width and 0 <= v < height):
        raise InvalidInputError(f"texel ({u}, {v}) outside {width}x{height}")
    theta = math.pi * (v + 0.5) / height
    phi = TWO_PI * (u + 0.5) / width
    return spherical_to_direction(theta, phi)


def direction_to_texel(direction, width: int, height: int) -> tuple[int, int]:
    theta, phi = direction_to_spherical(np.asarray(direction, dtype=float))
    v = min(int(theta / math.pi * height), height - 1)
    u = int(phi / TWO_PI * width) % width
    return u, v


def texel_solid_angle(v: int, width: int, height: int) -> float:
    """Solid angle of any texel in row ``v`` (sin-weighted midpoint rule)."""
    if not 0 <= v < height:
        raise InvalidInputError(f"row {v} outside [0, {height})")
    theta = math.pi * (v + 0.5) / height
    return (TWO_PI / width) * (math.pi / height) * math.sin(theta)


def solid_angle_rows(height: int) -> np.ndarray:
    """Per-row texel solid angle, shape (height,)."""
    theta, _ = texel_angles(height)
    return (TWO_PI / (2 * height)) * (math.pi / height) * np.sin(theta)


def direction_grid(height: int) -> np.ndarray:
    """Texel-centre unit directions, shape (height, 2*height, 3)."""
    theta, phi = texel_angles(height)
    return spherical_to_direction(theta[:, None], phi[None, :])


def angle_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(np.sum(a * b, axis=-1), -1.0, 1.0))
