"""Render error metrics, sun angular error and shadow-softness bucketing."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .envmap import center_azimuth, check_same_shape
from .errors import InvalidInputError, UndefinedScaleError
from .geometry import SunPosition, angle_between
from .sky import LMParams, SkyParams, SunParams, render_components
from .transport import ProbeScene, TransportMatrix

LUMA = np.array([0.2126, 0.7152, 0.0722])
HIST_EPS = 1e-8
BUCKETS = ("1", "2", "3", "all")


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    check_same_shape(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def optimal_scale(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    bb = float(b @ b)
    if bb == 0.0:
        raise UndefinedScaleError("reference image is identically zero")
    return float(a @ b) / bb


def si_rmse(a, b) -> float:
    """RMSE after scaling ``b`` by its least-squares optimal factor."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    check_same_shape(a, b)
    return rmse(a, optimal_scale(a, b) * b)


def sun_angular_error(a: SunPosition, b: SunPosition) -> float:
    return float(angle_between(a.direction, b.direction))


def cumulative_curve(errors: Sequence[float], grid: Sequence[float]) -> np.ndarray:
    errs = np.sort(np.asarray(errors, dtype=float))
    if errs.size == 0:
        raise InvalidInputError("cumulative curve needs at least one error")
    counts = np.searchsorted(errs, np.asarray(grid, dtype=float), side="right")
    return counts / errs.size


def curve_csv(grid: Sequence[float], fractions: Sequence[float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "fraction"])
    for t, f in zip(grid, fractions):
        w.writerow([repr(float(t)), repr(float(f))])
    return buf.getvalue()


# Sharp-shadow comparator. The sun radiance is large enough that the lobe
# (about 5.1e-5 sr) carries roughly 3x the sky's irradiance.
REFERENCE_PARAMS = LMParams(
    SunPosition(math.radians(45.0), 0.0),
    SunParams((1.5e5, 1.5e5, 1.5e5), 120.0, 0.02),
    SkyParams((1.0, 1.0, 1.0), 2.5),
)

# Generated by scripts/derive_softness_cuts.py (seed 0, 200 renders).
CUT_LOW = 0.0673
CUT_HIGH = 0.5762


@dataclass(frozen=True)
class SoftnessConfig:
    band_rows: int = 5
    bins: int = 32
    grad_range: tuple = (0.0, 1.0)
    kernel_bins: float = 2.0
    reference: LMParams = REFERENCE_PARAMS
    cut_low: float = CUT_LOW
    cut_high: float = CUT_HIGH

    def __post_init__(self):
        if not self.cut_low < self.cut_high:
            raise InvalidInputError("cut_low must be below cut_high")
        if self.bins < 8:
            raise InvalidInputError("need at least 8 histogram bins")


def canonical(params: LMParams, env_width: int) -> LMParams:
    """Same parameters with the sun moved to the centre-column azimuth."""
    return params.with_sun_pos(SunPosition(params.sun_pos.zenith_angle, center_azimuth(env_width)))


def shadow_band(render: np.ndarray, scene: ProbeScene, rows: int = 5) -> np.ndarray:
    """Luminance of the ``rows``-pixel band just below the sphere silhouette."""
    img = np.asarray(render, dtype=float)
    n = scene.render_size
    if img.shape[:2] != (n, n):
        raise InvalidInputError(f"render {img.shape[:2]} does not match scene size {n}")
    start = scene.footprint_last_row() + 1
    band = img[start : start + rows]
    return band @ LUMA if band.ndim == 3 else band


def gradient_histogram(band: np.ndarray, bins: int, value_range: tuple,
                       kernel_bins: float = 2.0) -> np.ndarray:
    """Normalised histogram of horizontal gradient magnitudes, relative to the band mean.

    Each sample is spread over neighbouring bins with a Gaussian of width
    ``kernel_bins`` bins (0 gives hard binning), which keeps the KL against
    the reference from jumping when a single sample crosses a bin edge.
    """
    lo, hi = value_range
    scale = max(float(np.mean(band)), 1e-12)
    grad = np.clip(np.abs(np.gradient(band / scale, axis=1)).ravel(), lo, hi)
    if kernel_bins <= 0:
        hist, _ = np.histogram(grad, bins=bins, range=value_range)
        hist = hist.astype(float)
    else:
        width = (hi - lo) / bins
        centers = lo + (np.arange(bins) + 0.5) * width
        w = np.exp(-0.5 * ((grad[:, None] - centers[None, :]) / (kernel_bins * width)) ** 2)
        hist = (w / w.sum(axis=1, keepdims=True)).sum(axis=0)
    hist = hist + HIST_EPS
    return hist / hist.sum()


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)))


def reference_render(T: TransportMatrix, cfg: SoftnessConfig = SoftnessConfig()) -> np.ndarray:
    return _reference_render(T, cfg.reference)


_REF_CACHE: dict = {}


def _reference_render(T: TransportMatrix, params: LMParams) -> np.ndarray:
    key = (id(T), params)
    if key not in _REF_CACHE:
        sun, sky = render_components(canonical(params, T.env_width), T.env_height)
        flat = (sun + sky).reshape(-1, 3)[: T.n_upper]
        _REF_CACHE.clear()
        _REF_CACHE[key] = (T.upper64() @ flat).reshape(T.render_size, T.render_size, 3)
    return _REF_CACHE[key]


def shadow_softness(render: np.ndarray, T: TransportMatrix, scene: ProbeScene = ProbeScene(),
                    cfg: SoftnessConfig = SoftnessConfig()) -> tuple[float, int]:
    """KL divergence of the shadow-band gradient histogram from the reference, and its bucket.

    The render must have the sun at the centre-column azimuth so that the
    shadow falls below the sphere in image space.
    """
    if scene.render_size != T.render_size:
        raise InvalidInputError("scene and transport render sizes differ")
    ref = _reference_render(T, cfg.reference)
    h_ref = gradient_histogram(shadow_band(ref, scene, cfg.band_rows), cfg.bins,
                               cfg.grad_range, cfg.kernel_bins)
    h_img = gradient_histogram(shadow_band(render, scene, cfg.band_rows), cfg.bins,
                               cfg.grad_range, cfg.kernel_bins)
    kl = max(_kl(h_ref, h_img), 0.0)
    if kl < cfg.cut_low:
        bucket = 1
    elif kl < cfg.cut_high:
        bucket = 2
    else:
        bucket = 3
    return kl, bucket


def _summary(values: list) -> Optional[dict]:
    if not values:
        return None
    v = np.asarray(values, dtype=float)
    return {
        "median": float(np.median(v)),
        "p25": float(np.percentile(v, 25)),
        "p75": float(np.percentile(v, 75)),
        "n": int(v.size),
    }


def bucketed_report(pairs: Iterable[tuple]) -> dict:
    """Median / quartiles of RMSE and si-RMSE per softness bucket and overall."""
    pairs = list(pairs)
    if not pairs:
        raise InvalidInputError("bucketed report needs at least one pair")
    per = {k: {"rmse": [], "si_rmse": []} for k in BUCKETS}
    for gt, pred, bucket in pairs:
        if int(bucket) not in (1, 2, 3):
            raise InvalidInputError(f"bucket must be 1, 2 or 3, got {bucket}")
        e = rmse(gt, pred)
        try:
            s = si_rmse(gt, pred)
        except UndefinedScaleError:
            s = rmse(gt, np.zeros_like(gt))
        for key in (str(int(bucket)), "all"):
            per[key]["rmse"].append(e)
            per[key]["si_rmse"].append(s)
    return {
        metric: {k: _summary(per[k][metric]) for k in BUCKETS}
        for metric in ("rmse", "si_rmse")
    }


def format_report(report: dict) -> str:
    lines = [f"{'metric':<8} " + " ".join(f"{b:>20}" for b in BUCKETS)]
    for metric in ("rmse", "si_rmse"):
        cells = []
        for b in BUCKETS:
            s = report[metric][b]
            cells.append(
                f"{'-':>20}" if s is None
                else f"{s['median']:>8.4f} [{s['p25']:.3f},{s['p75']:.3f}]".rjust(20)
            )
        lines.append(f"{metric:<8} " + " ".join(cells))
    return "\n".join(lines) + "\n"


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
