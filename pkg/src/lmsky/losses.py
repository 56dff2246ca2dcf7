"""Render, panorama and parameter losses.

All image losses are means over pixels and channels, so their magnitude does
not depend on render or panorama resolution.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .envmap import EnvMap, check_same_shape
from .errors import InvalidInputError
from .geometry import TWO_PI, SunPosition
from .sky import LMParams, render_components
from .transport import TransportMatrix, render_probe

ELEVATION_BINS = 16
AZIMUTH_BINS = 64


@dataclass(frozen=True)
class ParamRanges:
    """Per-parameter [min, max] used to map parameters onto [0, 1]."""

    beta: tuple = (0.0, 200.0)
    kappa: tuple = (0.001, 2.0)
    turbidity: tuple = (2.0, 20.0)
    w_sun: tuple = (0.0, 1.0e6)
    w_sky: tuple = (0.0, 50.0)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not lo < hi:
                raise InvalidInputError(f"range for {f.name} must have min < max")
            object.__setattr__(self, f.name, (float(lo), float(hi)))

    def normalize(self, name: str, value):
        lo, hi = getattr(self, name)
        v = np.asarray(value, dtype=float)
        if np.any(v < lo) or np.any(v > hi):
            raise InvalidInputError(f"{name}={value} outside [{lo}, {hi}]")
        return (v - lo) / (hi - lo)

    @classmethod
    def from_json(cls, obj: dict) -> "ParamRanges":
        return cls(**{k: tuple(v) for k, v in obj.items()})

    def to_json(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class LossWeights:
    w_beta: float = 10.0
    w_kappa: float = 5.0
    w_wsun: float = 10.0
    w_t: float = 1.0
    w_wsky: float = 1.0
    w_sky_render: float = 0.2
    w_sun_render: float = 1.0
    w_lm_render: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise InvalidInputError(f"loss weight {f.name} must be > 0")

    @classmethod
    def from_json(cls, obj: dict) -> "LossWeights":
        return cls(**obj)

    def to_json(self) -> dict:
        return asdict(self)


def load_config(path) -> tuple[ParamRanges, LossWeights, dict]:
    """Read ranges, weights and any other sections from a JSON config file."""
    with open(path) as f:
        obj = json.load(f)
    ranges = ParamRanges.from_json(obj.get("ranges", {}))
    weights = LossWeights.from_json(obj.get("weights", {}))
    return ranges, weights, obj


def pano_l1(p_star: EnvMap, p_hat: EnvMap) -> float:
    check_same_shape(p_star.data, p_hat.data)
    return float(np.mean(np.abs(p_star.data.astype(np.float64) - p_hat.data)))


def elevation_l2(theta_star: float, theta_hat: float) -> float:
    return float((theta_star - theta_hat) ** 2)


def render_l2(T: TransportMatrix, a, b) -> float:
    ra = render_probe(T, a)
    rb = render_probe(T, b)
    return float(np.mean((ra - rb) ** 2))


def lm_render_losses(T: TransportMatrix, p_hdr: EnvMap, p_ldr: EnvMap, q: LMParams):
    """(L_sky, L_sun, L_lm) for predicted parameters against an HDR/LDR pair."""
    check_same_shape(p_hdr.data, p_ldr.data)
    T.check_env(p_hdr.data.shape)
    sun_rgb, sky_rgb = render_components(q, p_hdr.height)
    r_hdr = render_probe(T, p_hdr)
    r_ldr = render_probe(T, p_ldr)
    r_sun = render_probe(T, sun_rgb)
    r_sky = render_probe(T, sky_rgb)
    l_sky = np.mean((r_ldr - r_sky) ** 2)
    l_sun = np.mean(((r_hdr - r_ldr) - r_sun) ** 2)
    l_lm = np.mean((r_hdr - (r_sun + r_sky)) ** 2)
    return float(l_sky), float(l_sun), float(l_lm)


def param_losses(q_hat: LMParams, q_tilde: LMParams, ranges: ParamRanges = ParamRanges(),
                 weights: LossWeights = LossWeights()) -> float:
    """Weighted squared error of [0, 1]-normalised radiometric parameters."""
    terms = {
        "beta": (weights.w_beta, q_hat.sun.beta, q_tilde.sun.beta),
        "kappa": (weights.w_kappa, q_hat.sun.kappa, q_tilde.sun.kappa),
        "turbidity": (weights.w_t, q_hat.sky.turbidity, q_tilde.sky.turbidity),
        "w_sun": (weights.w_wsun, q_hat.sun.w_sun, q_tilde.sun.w_sun),
        "w_sky": (weights.w_wsky, q_hat.sky.w_sky, q_tilde.sky.w_sky),
    }
    total = 0.0
    for name, (w, a, b) in terms.items():
        d = ranges.normalize(name, a) - ranges.normalize(name, b)
        total += w * float(np.sum(d * d))
    return total


def bin_sun_position(sun: SunPosition, smoothing_sigma: float = 1.0) -> np.ndarray:
    """(16, 64) elevation x azimuth probabilities; Gaussian bump with azimuth wrap."""
    de = (math.pi / 2) / ELEVATION_BINS
    da = TWO_PI / AZIMUTH_BINS
    ce = min(sun.elevation / de, ELEVATION_BINS - 1e-9) - 0.5
    ca = sun.azimuth / da - 0.5
    if smoothing_sigma <= 0:
        dist = np.zeros((ELEVATION_BINS, AZIMUTH_BINS))
        dist[int(math.floor(ce + 0.5)), int(math.floor(ca + 0.5)) % AZIMUTH_BINS] = 1.0
        return dist
    ie = np.arange(ELEVATION_BINS)[:, None] - ce
    ia = np.arange(AZIMUTH_BINS)[None, :] - ca
    ia = (ia + AZIMUTH_BINS / 2) % AZIMUTH_BINS - AZIMUTH_BINS / 2
    dist = np.exp(-(ie ** 2 + ia ** 2) / (2 * smoothing_sigma ** 2))
    return dist / dist.sum()


def kl_divergence(target: np.ndarray, pred: np.ndarray, eps: float = 1e-12) -> float:
    target = np.asarray(target, dtype=float)
    pred = np.asarray(pred, dtype=float)
    check_same_shape(target, pred)
    m = target > 0
    kl = float(np.sum(target[m] * np.log(target[m] / np.maximum(pred[m], eps))))
    return max(kl, 0.0)
