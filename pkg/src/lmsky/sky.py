"""LM sun + sky radiance model.

The sky term is a Preetham/Perez luminance distribution normalised to 1 at
the zenith and scaled channel-wise by ``w_sky``; the sun term is the double
exponential lobe ``w_sun * exp(-beta * exp(-kappa / gamma))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .envmap import EnvMap
from .errors import InvalidInputError
from .geometry import (
    SunPosition,
    angle_between,
    check_unit,
    direction_grid,
    spherical_to_direction,
    texel_angles,
)

GAMMA_EPS = 1e-6
COS_EPS = 1e-6
# Preetham's luminance fit goes negative at the zenith below t ~= 1.65.
TURBIDITY_MIN = 2.0
TURBIDITY_MAX = 20.0

# (slope, intercept) per Perez coefficient, luminance channel (Preetham 1999, A.2).
_PEREZ_Y = np.array(
    [
        [0.1787, -1.4630],
        [-0.3554, 0.4275],
        [-0.0227, 5.3251],
        [0.1206, -2.5771],
        [-0.0670, 0.3703],
    ]
)


def _rgb(value, name: str) -> tuple[float, float, float]:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        arr = np.repeat(arr, 3)
    if arr.size != 3 or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be a finite RGB triple")
    if np.any(arr < 0):
        raise InvalidInputError(f"{name} must be non-negative")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class SunParams:
    w_sun: tuple = (0.0, 0.0, 0.0)
    beta: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "w_sun", _rgb(self.w_sun, "w_sun"))
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise InvalidInputError(f"beta must be >= 0, got {self.beta}")
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise InvalidInputError(f"kappa must be > 0, got {self.kappa}")


@dataclass(frozen=True)
class SkyParams:
    w_sky: tuple = (0.0, 0.0, 0.0)
    turbidity: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "w_sky", _rgb(self.w_sky, "w_sky"))
        check_turbidity(self.turbidity)


@dataclass(frozen=True)
class LMParams:
    sun_pos: SunPosition
    sun: SunParams = field(default_factory=SunParams)
    sky: SkyParams = field(default_factory=SkyParams)

    def to_json(self) -> dict:
        return {
            "sun_zenith": self.sun_pos.zenith_angle,
            "sun_azimuth": self.sun_pos.azimuth,
            "w_sun": list(self.sun.w_sun),
            "beta": self.sun.beta,
            "kappa": self.sun.kappa,
            "w_sky": list(self.sky.w_sky),
            "turbidity": self.sky.turbidity,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LMParams":
        keys = {"sun_zenith", "sun_azimuth", "w_sun", "beta", "kappa", "w_sky", "turbidity"}
        if not isinstance(obj, dict):
            raise InvalidInputError("LM parameters must be a JSON object")
        missing = keys - obj.keys()
        if missing:
            raise InvalidInputError(f"missing LM parameter fields: {sorted(missing)}")
        try:
            return cls(
                SunPosition(float(obj["sun_zenith"]), float(obj["sun_azimuth"])),
                SunParams(obj["w_sun"], float(obj["beta"]), float(obj["kappa"])),
                SkyParams(obj["w_sky"], float(obj["turbidity"])),
            )
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(str(exc)) from exc

    def with_sun_pos(self, sun_pos: SunPosition) -> "LMParams":
        return replace(self, sun_pos=sun_pos)


def check_turbidity(t: float, lo: float = TURBIDITY_MIN, hi: float = TURBIDITY_MAX) -> float:
    if not (math.isfinite(t) and lo <= t <= hi):
        raise InvalidInputError(f"turbidity {t} outside [{lo}, {hi}]")
    return float(t)


def perez_coefficients(turbidity: float) -> np.ndarray:
    """A..E of the Perez luminance distribution for a given turbidity."""
    return _PEREZ_Y[:, 0] * turbidity + _PEREZ_Y[:, 1]


def _perez_f(theta, gamma, coeffs):
    a, b, c, d, e = coeffs
    cos_t = np.maximum(np.cos(theta), COS_EPS)
    cos_g = np.cos(gamma)
    return (1.0 + a * np.exp(b / cos_t)) * (1.0 + c * np.exp(d * gamma) + e * cos_g * cos_g)


def perez_ratio(zenith_angle, gamma_sun, sun_zenith, turbidity):
    """Zenith-normalised Perez luminance; 0 below the horizon. Broadcasts."""
    check_turbidity(float(turbidity))
    coeffs = perez_coefficients(float(turbidity))
    zenith_angle = np.asarray(zenith_angle, dtype=float)
    ratio = _perez_f(zenith_angle, gamma_sun, coeffs) / _perez_f(0.0, sun_zenith, coeffs)
    # At the zenith gamma_sun is the sun zenith, so the ratio is 1 up to rounding in gamma.
    ratio = np.where(zenith_angle == 0.0, 1.0, ratio)
    out = np.where(zenith_angle <= math.pi / 2, ratio, 0.0)
    return float(out) if out.ndim == 0 else out


def sun_shape(gamma, beta: float, kappa: float):
    """exp(-beta exp(-kappa/gamma)), exactly 1 at gamma == 0."""
    gamma = np.asarray(gamma, dtype=float)
    g = np.maximum(gamma, GAMMA_EPS)
    out = np.exp(-beta * np.exp(-kappa / g))
    out = np.where(gamma == 0.0, 1.0, out)
    return float(out) if out.ndim == 0 else out


def angle_to_sun(direction, sun_pos: SunPosition) -> float:
    d = check_unit(direction)
    return angle_between(d, sun_pos.direction)


def eval_sun(gamma_sun, sun: SunParams) -> np.ndarray:
    s = np.asarray(sun_shape(gamma_sun, sun.beta, sun.kappa))
    return s[..., None] * np.asarray(sun.w_sun)


def eval_sky(direction, sky: SkyParams, sun_pos: SunPosition) -> np.ndarray:
    d = check_unit(direction)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    gamma = angle_between(d, sun_pos.direction)
    ratio = np.asarray(perez_ratio(theta, gamma, sun_pos.zenith_angle, sky.turbidity))
    return ratio[..., None] * np.asarray(sky.w_sky)


def eval_lm(direction, params: LMParams) -> np.ndarray:
    d = check_unit(direction)
    gamma = angle_between(d, params.sun_pos.direction)
    total = eval_sun(gamma, params.sun) + eval_sky(d, params.sky, params.sun_pos)
    above = (d[..., 1] >= 0)[..., None]
    return np.where(above, total, 0.0)


def sun_lobe_solid_angle(beta: float, kappa: float) -> float:
    """Integral of the sun shape over the whole sphere, steradians."""
    core = kappa / max(math.log(beta), 1.0) if beta > 1 else kappa
    pts = sorted({min(x, math.pi) for x in (0.25 * core, core, 4 * core, 16 * core)} - {math.pi})
    val, _ = integrate.quad(
        lambda g: float(sun_shape(g, beta, kappa)) * 2 * math.pi * math.sin(g),
        0.0, math.pi, points=pts, limit=400, epsabs=0.0, epsrel=1e-10,
    )
    return val


def _supersample_plan(beta: float, kappa: float, height: int, max_sub: int):
    """Return (radius, subdivisions) of the neighbourhood rendered with supersampling."""
    texel = math.pi / height
    width = kappa / max(math.log(beta), 1.0) if beta > 1 else kappa
    sub = int(min(max_sub, math.ceil(3.0 * texel / width)))
    return 4.0 * kappa + 1.5 * texel, sub


def sun_shape_map(sun_pos: SunPosition, beta: float, kappa: float, height: int,
                  supersample: bool = True, max_sub: int = 32) -> np.ndarray:
    """Scalar sun lobe per texel, (height, 2*height) float64.

    Texel centres are used everywhere except within a few lobe widths of the
    sun, where the lobe is averaged over a solid-angle weighted sub-grid so
    that suns narrower than a texel keep their energy.
    """
    dirs = direction_grid(height)
    sdir = sun_pos.direction
    gamma = angle_between(dirs, sdir)
    out = np.asarray(sun_shape(gamma, beta, kappa), dtype=float)
    if not supersample:
        return out
    radius, sub = _supersample_plan(beta, kappa, height, max_sub)
    if sub <= 1:
        return out
    rows, cols = np.nonzero(gamma < radius)
    if rows.size == 0:
        return out
    width = 2 * height
    frac = (np.arange(sub) + 0.5) / sub
    th = math.pi * (rows[:, None] + frac[None, :]) / height  # (n, sub)
    ph = 2 * math.pi * (cols[:, None] + frac[None, :]) / width
    d = spherical_to_direction(th[:, :, None], ph[:, None, :])  # (n, sub, sub, 3)
    g = angle_between(d, sdir)
    wgt = np.broadcast_to(np.sin(th)[:, :, None], g.shape)
    vals = np.asarray(sun_shape(g, beta, kappa))
    out[rows, cols] = (vals * wgt).sum(axis=(1, 2)) / wgt.sum(axis=(1, 2))
    return out


def sky_ratio_map(sun_pos: SunPosition, turbidity: float, height: int) -> np.ndarray:
    """Zenith-normalised Perez ratio per texel, (height, 2*height) float64."""
    theta, _ = texel_angles(height)
    dirs = direction_grid(height)
    gamma = angle_between(dirs, sun_pos.direction)
    return perez_ratio(theta[:, None], gamma, sun_pos.zenith_angle, turbidity)


def _check_height(height: int) -> None:
    if height < 4 or height % 2:
        raise InvalidInputError(f"envmap height must be even and >= 4, got {height}")


def render_components(params: LMParams, height: int, supersample: bool = True):
    """Sun-only and sky-only radiance maps (float64, below horizon zeroed)."""
    _check_height(height)
    horizon = np.zeros((height, 1))
    horizon[: height // 2] = 1.0
    sun = sun_shape_map(params.sun_pos, params.sun.beta, params.sun.kappa, height, supersample)
    sky = sky_ratio_map(params.sun_pos, params.sky.turbidity, height)
    sun_rgb = (sun * horizon)[..., None] * np.asarray(params.sun.w_sun)
    sky_rgb = (sky * horizon)[..., None] * np.asarray(params.sky.w_sky)
    return sun_rgb, sky_rgb


def render_envmap(params: LMParams, height: int, supersample: bool = True) -> EnvMap:
    sun_rgb, sky_rgb = render_components(params, height, supersample)
    return EnvMap((sun_rgb + sky_rgb).astype(np.float32))


def render_sun_envmap(params: LMParams, height: int, supersample: bool = True) -> EnvMap:
    return EnvMap(render_components(params, height, supersample)[0].astype(np.float32))


def render_sky_envmap(params: LMParams, height: int) -> EnvMap:
    return EnvMap(render_components(params, height)[1].astype(np.float32))
