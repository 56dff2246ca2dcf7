"""Equirectangular panoramas: containers, LDR simulation, crops and sun detection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .errors import GeometryMismatchError, InvalidInputError
from .geometry import (
    TWO_PI,
    SunPosition,
    direction_to_spherical,
    direction_grid,
    solid_angle_rows,
    spherical_to_direction,
)

DEFAULT_SATURATION = 254
DEFAULT_EXPOSURE_RANGE = (0.2, 2.0)
DISPLAY_GAMMA = 2.2


@dataclass(frozen=True, eq=False)
class EnvMap:
    """Linear HDR radiance, ``data`` is float32 of shape (height, 2*height, 3)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3 or data.shape[2] != 3:
            raise InvalidInputError(f"envmap must be (H, W, 3), got {data.shape}")
        h, w, _ = data.shape
        if w != 2 * h:
            raise InvalidInputError(f"envmap width {w} must be twice its height {h}")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("envmap contains non-finite values")
        if np.any(data < 0):
            raise InvalidInputError("envmap contains negative radiance")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def zeros(cls, height: int) -> "EnvMap":
        return cls(np.zeros((height, 2 * height, 3), np.float32))

    @classmethod
    def from_ldr(cls, ldr: "LdrImage") -> "EnvMap":
        """Map 8-bit codes back to [0, 1] without undoing any gamma."""
        return cls(ldr.data.astype(np.float32) / 255.0)


@dataclass(frozen=True, eq=False)
class LdrImage:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise InvalidInputError(f"LDR image must be (H, W, 3), got {data.shape}")
        if data.dtype != np.uint8:
            if np.any(data < 0) or np.any(data > 255):
                raise InvalidInputError("LDR values must lie in [0, 255]")
            data = data.astype(np.uint8)
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CropSpec:
    azimuth: float
    elevation: float = 0.0
    fov_horizontal: float = math.radians(60.0)
    width: int = 320
    height: int = 240

    def __post_init__(self):
        if not 0.0 < self.fov_horizontal < math.pi:
            raise InvalidInputError("fov_horizontal must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("crop size must be positive")

    @property
    def focal(self) -> float:
        """Focal length in pixels; square pixels, so vertical fov follows from aspect."""
        return 0.5 * self.width / math.tan(0.5 * self.fov_horizontal)

    def to_json(self) -> dict:
        return {
            "azimuth": self.azimuth,
            "elevation": self.elevation,
            "fov_horizontal": self.fov_horizontal,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CropSpec":
        return cls(**obj)


Image = Union[EnvMap, LdrImage]


def ldr_simulate(
    pano: EnvMap,
    exposure: float = 1.0,
    gamma_encode: bool = False,
    rounding: str = "half_up",
) -> LdrImage:
    """Expose, clip to [0, 1], optionally gamma-encode, quantize to 8 bits.

    Loss targets use the linear path; ``gamma_encode=True`` is for display only.
    """
    if not exposure > 0:
        raise InvalidInputError(f"exposure must be > 0, got {exposure}")
    x = np.clip(pano.data.astype(np.float64) * exposure, 0.0, 1.0)
    if gamma_encode:
        x = x ** (1.0 / DISPLAY_GAMMA)
    x = x * 255.0
    if rounding == "half_up":
        q = np.floor(x + 0.5)
    elif rounding == "floor":
        q = np.floor(x)
    elif rounding == "nearest_even":
        q = np.round(x)
    else:
        raise InvalidInputError(f"unknown rounding mode {rounding!r}")
    return LdrImage(np.clip(q, 0, 255).astype(np.uint8))


def tonemap_preview(image: np.ndarray, exposure: float = 1.0) -> LdrImage:
    """gamma-2.2 display encoding for arbitrary (H, W, 3) linear arrays."""
    x = np.clip(np.asarray(image, dtype=np.float64) * exposure, 0.0, 1.0)
    return LdrImage(np.floor(x ** (1.0 / DISPLAY_GAMMA) * 255.0 + 0.5).astype(np.uint8))


def random_exposure(rng: np.random.Generator, low: float, high: float) -> float:
    """Log-uniform exposure factor in [low, high]."""
    if not 0 < low <= high:
        raise InvalidInputError(f"bad exposure range [{low}, {high}]")
    return float(math.exp(rng.uniform(math.log(low), math.log(high))))


def _label_with_wrap(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected labels where the left and right columns are neighbours."""
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return labels, 0
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    h = mask.shape[0]
    left, right = labels[:, 0], labels[:, -1]
    for v in range(h):
        if not left[v]:
            continue
        for dv in (-1, 0, 1):
            vv = v + dv
            if 0 <= vv < h and right[vv]:
                ra, rb = find(left[v]), find(right[vv])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n + 1)])
    _, compact = np.unique(roots, return_inverse=True)
    return compact[labels], int(compact.max())


def detect_sun(pano: LdrImage, saturation_threshold: int = DEFAULT_SATURATION) -> Optional[SunPosition]:
    """Solid-angle weighted centroid of the largest saturated sky region, or None."""
    h, w = pano.height, pano.width
    if w != 2 * h:
        raise InvalidInputError("sun detection needs a full equirectangular panorama")
    mask = np.all(pano.data >= saturation_threshold, axis=2)
    mask[h // 2 :] = False
    labels, n = _label_with_wrap(mask)
    if n == 0:
        return None
    dw = np.broadcast_to(solid_angle_rows(h)[:, None], (h, w))
    areas = ndimage.sum(dw, labels, index=np.arange(1, n + 1))
    best = int(np.argmax(areas)) + 1
    sel = labels == best
    dirs = direction_grid(h)[sel]
    mean = (dirs * dw[sel][:, None]).sum(axis=0)
    return SunPosition.from_direction(mean / np.linalg.norm(mean))


def _bilinear(data: np.ndarray, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    h, w = data.shape[:2]
    x = phi / TWO_PI * w - 0.5
    y = np.clip(theta / math.pi * h - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x).astype(int)
    y0 = np.minimum(np.floor(y).astype(int), h - 2) if h > 1 else np.zeros_like(x0)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 %= w
    x1 = (x0 + 1) % w
    y1 = np.minimum(y0 + 1, h - 1)
    d = data.astype(np.float64)
    top = d[y0, x0] * (1 - fx) + d[y0, x1] * fx
    bot = d[y1, x0] * (1 - fx) + d[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def camera_basis(azimuth: float, elevation: float):
    """(forward, right, up) for a level-roll pinhole camera."""
    forward = spherical_to_direction(math.pi / 2 - elevation, azimuth)
    right = np.array([-math.sin(azimuth), 0.0, math.cos(azimuth)])
    up = np.cross(right, forward)
    return forward, right, up


def crop_rays(spec: CropSpec) -> np.ndarray:
    """World-space unit rays through each crop pixel centre, (H, W, 3)."""
    forward, right, up = camera_basis(spec.azimuth, spec.elevation)
    xs = np.arange(spec.width) + 0.5 - spec.width / 2
    ys = spec.height / 2 - (np.arange(spec.height) + 0.5)
    rays = (
        xs[None, :, None] * right
        + ys[:, None, None] * up
        + spec.focal * forward
    )
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def project_to_crop(direction, spec: CropSpec) -> Optional[tuple[float, float]]:
    """Continuous (column, row) of a world direction in the crop, None if behind."""
    forward, right, up = camera_basis(spec.azimuth, spec.elevation)
    d = np.asarray(direction, dtype=float)
    z = d @ forward
    if z <= 0:
        return None
    col = spec.width / 2 + spec.focal * (d @ right) / z
    row = spec.height / 2 - spec.focal * (d @ up) / z
    return float(col), float(row)


def extract_crop(pano: Image, spec: CropSpec) -> Image:
    """Pinhole view of a panorama with bilinear sampling; keeps the input type."""
    theta, phi = direction_to_spherical(crop_rays(spec))
    out = _bilinear(pano.data, theta, phi)
    if isinstance(pano, LdrImage):
        return LdrImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))
    return np.asarray(out, dtype=np.float32)


def make_crop_set(
    seed: int,
    count: int = 7,
    fov: float = math.radians(60.0),
    elevation: float = 0.0,
    width: int = 320,
    height: int = 240,
) -> list[CropSpec]:
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    rng = np.random.default_rng(seed)
    azimuths = rng.uniform(0.0, TWO_PI, size=count)
    return [CropSpec(float(a), elevation, fov, width, height) for a in azimuths]


def center_azimuth(width: int) -> float:
    """Azimuth of the centre column's texel centre."""
    return TWO_PI * (width // 2 + 0.5) / width


def roll_shift(azimuth: float, width: int) -> int:
    u = int((azimuth % TWO_PI) / TWO_PI * width) % width
    return width // 2 - u


def roll_columns(pano: Image, shift: int) -> Image:
    return type(pano)(np.roll(pano.data, shift, axis=1))


def roll_to_center(pano: Image, azimuth: float) -> Image:
    """Circularly shift columns so ``azimuth`` lands in the centre column."""
    shift = roll_shift(azimuth, pano.width)
    if shift == 0:
        return pano
    return roll_columns(pano, shift)


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise GeometryMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
