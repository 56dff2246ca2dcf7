"""Seeded synthetic skies and sun-disk panoramas for tests and benchmarks."""

from __future__ import annotations

import math

import numpy as np

from .envmap import EnvMap
from .geometry import SunPosition, angle_between, direction_grid, texel_angles
from .sky import LMParams, SkyParams, SunParams, sun_lobe_solid_angle

WEATHERS = ("sunny", "mixed", "overcast")


def random_lm_params(rng: np.random.Generator, weather: str) -> LMParams:
    """Draw LMParams for one weather regime.

    The sun radiance is set from a target irradiance ratio against the sky
    rather than drawn directly, because the lobe solid angle varies by five
    orders of magnitude over the shape parameters.
    """
    if weather not in WEATHERS:
        raise ValueError(f"unknown weather {weather!r}")
    pos = SunPosition(math.radians(rng.uniform(30.0, 70.0)), rng.uniform(0.0, 2 * math.pi))
    tint = rng.uniform(0.8, 1.2, size=3)
    w_sky = rng.uniform(0.3, 1.2) * tint / tint.mean()
    if weather == "overcast":
        t = rng.uniform(8.0, 20.0)
        return LMParams(pos, SunParams((0.0,) * 3, 0.0, 1.0), SkyParams(tuple(w_sky), t))
    if weather == "sunny":
        beta, kappa = rng.uniform(60.0, 200.0), rng.uniform(0.02, 0.08)
        t, ratio = rng.uniform(2.0, 5.0), rng.uniform(1.5, 5.0)
    else:
        beta, kappa = rng.uniform(2.0, 20.0), rng.uniform(0.2, 0.8)
        t, ratio = rng.uniform(4.0, 10.0), rng.uniform(0.3, 1.5)
    colour = rng.uniform(0.9, 1.1, size=3)
    w_sun = ratio * float(w_sky.mean()) / sun_lobe_solid_angle(beta, kappa) * colour / colour.mean()
    return LMParams(pos, SunParams(tuple(w_sun), beta, kappa), SkyParams(tuple(w_sky), t))


def weather_set(seed: int, n: int = 20) -> list[LMParams]:
    """``n`` parameter sets cycling sunny, mixed, overcast."""
    rng = np.random.default_rng(seed)
    return [random_lm_params(rng, WEATHERS[i % 3]) for i in range(n)]


def sun_disk_pano(sun_pos: SunPosition, radius: float, height: int = 64,
                  sun_radiance: float = 50.0, sky_radiance: float = 0.4) -> EnvMap:
    """Gradient sky plus a uniform disk of angular ``radius`` around ``sun_pos``.

    The disk is area-sampled (4x4 per texel) so that its partial-coverage
    edge texels stay below saturation in proportion to their coverage.
    """
    theta, _ = texel_angles(height)
    sky = sky_radiance * (0.5 + 0.5 * np.cos(theta))[:, None] * np.ones((1, 2 * height))
    sub = 4
    frac = (np.arange(sub) + 0.5) / sub
    cover = np.zeros((height, 2 * height))
    sdir = sun_pos.direction
    near = angle_between(direction_grid(height), sdir) < radius + 2 * math.pi / height
    rows, cols = np.nonzero(near)
    for r, c in zip(rows, cols):
        th = math.pi * (r + frac) / height
        ph = 2 * math.pi * (c + frac) / (2 * height)
        st = np.sin(th)[:, None]
        d = np.stack([st * np.cos(ph)[None, :], np.cos(th)[:, None] * np.ones((1, sub)),
                      st * np.sin(ph)[None, :]], axis=-1)
        inside = angle_between(d, sdir) < radius
        cover[r, c] = (inside * st).sum() / (st.sum() * sub)
    data = sky * (1 - cover) + sun_radiance * cover
    data[height // 2 :] = 0.1 * sky_radiance
    return EnvMap(np.repeat(data[..., None], 3, axis=2).astype(np.float32))
