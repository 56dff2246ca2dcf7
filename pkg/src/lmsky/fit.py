"""Recover LM parameters from panoramas by nonlinear least squares on probe renders.

The objective is evaluated through the transport matrix rather than per
texel: the sun is often narrower than a texel, which makes texel-space L2
badly conditioned, while its rendered effect (a cast shadow) is smooth.
Sun position is never optimised; it comes from a hint, from saturated-region
detection, or, failing both, from a grid search over the sun-position bins.
"""

from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .envmap import (
    DEFAULT_SATURATION,
    EnvMap,
    LdrImage,
    detect_sun,
    ldr_simulate,
    roll_columns,
    roll_shift,
)
from .errors import InvalidInputError, LMSkyError
from .geometry import SunPosition
from .losses import (
    AZIMUTH_BINS,
    ELEVATION_BINS,
    LossWeights,
    ParamRanges,
    lm_render_losses,
    pano_l1,
)
from .metrics import SoftnessConfig, shadow_softness
from .sky import (
    LMParams,
    SkyParams,
    SunParams,
    render_envmap,
    sky_ratio_map,
    sun_shape_map,
)
from .transport import ProbeScene, TransportMatrix, render_probe

log = logging.getLogger(__name__)

# order of the radiometric parameter vector
NAMES = ("beta", "kappa", "turbidity", "w_sun_r", "w_sun_g", "w_sun_b", "w_sky_r", "w_sky_g", "w_sky_b")
RANGE_KEYS = ("beta", "kappa", "turbidity", "w_sun", "w_sun", "w_sun", "w_sky", "w_sky", "w_sky")
LABEL_HEADER = "# lmsky labels v1"


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 100
    tolerance: float = 1e-6
    restarts: int = 3
    seed: int = 0
    log_transform: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    ranges: ParamRanges = field(default_factory=ParamRanges)
    fd_step: float = 1e-4
    restart_sigma: float = 0.5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise InvalidInputError("tolerance must be > 0")
        if self.restarts < 1:
            raise InvalidInputError("restarts must be >= 1")


@dataclass
class FitResult:
    params: LMParams
    losses: dict
    iterations: int
    restart: int
    converged: bool
    sun_source: str = "hint"
    sky_only: bool = False
    history: list = field(default_factory=list)

    @property
    def sun_detected(self) -> bool:
        return self.sun_source == "detected"


class ParamTransform:
    """Map natural parameters to the optimiser's (optionally log) coordinates."""

    def __init__(self, ranges: ParamRanges, keys, log_space: bool = True):
        self.log_space = log_space
        lo, hi, floor_hit = [], [], []
        for key in keys:
            a, b = getattr(ranges, key)
            if log_space:
                a_eff = a if a > 0 else 1e-9 * b
                lo.append(math.log(a_eff))
                hi.append(math.log(b))
            else:
                lo.append(a)
                hi.append(b)
            floor_hit.append(a)
        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.natural_min = np.array(floor_hit)

    def forward(self, natural: np.ndarray) -> np.ndarray:
        nat = np.asarray(natural, dtype=float)
        x = np.log(np.maximum(nat, 1e-300)) if self.log_space else nat.copy()
        return np.clip(x, self.lo, self.hi)

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return np.exp(x) if self.log_space else np.asarray(x, dtype=float).copy()

    def dnatural(self, x: np.ndarray) -> np.ndarray:
        """d natural / d x, elementwise."""
        return np.exp(x) if self.log_space else np.ones_like(x)

    def snap(self, x: np.ndarray) -> np.ndarray:
        """Natural values, with coordinates pinned at an open lower bound set to the range minimum."""
        nat = self.inverse(x)
        at_floor = x <= self.lo + 1e-9
        return np.where(at_floor, np.maximum(self.natural_min, np.where(at_floor, 0.0, nat)), nat)


class RenderObjective:
    """Weighted squared render residuals as a function of the radiometric parameters.

    ``mode="lm"`` stacks the LM, sky and sun render residuals (9 parameters);
    ``mode="sky"`` fits only turbidity and sky colour to the LDR render.
    """

    def __init__(self, T: TransportMatrix, p_hdr: EnvMap, p_ldr: EnvMap, sun_pos: SunPosition,
                 weights: LossWeights = LossWeights(), mode: str = "lm", supersample: bool = True):
        T.check_env(p_hdr.data.shape)
        if mode not in ("lm", "sky"):
            raise InvalidInputError(f"unknown objective mode {mode!r}")
        self.T = T
        self.mode = mode
        self.sun_pos = sun_pos
        self.height = p_hdr.height
        self.supersample = supersample
        n_up = T.n_upper
        M = T.upper64()
        hdr = p_hdr.data.reshape(-1, 3)[:n_up].astype(np.float64)
        ldr = p_ldr.data.reshape(-1, 3)[:n_up].astype(np.float64)
        self.r_hdr = M @ hdr
        self.r_ldr = M @ ldr
        self.r_diff = self.r_hdr - self.r_ldr
        n = self.r_hdr.size
        self.s_lm = math.sqrt(weights.w_lm_render / n)
        self.s_sky = math.sqrt(weights.w_sky_render / n)
        self.s_sun = math.sqrt(weights.w_sun_render / n)
        self.s_plain = math.sqrt(1.0 / n)
        self._sun_cache: OrderedDict = OrderedDict()
        self._sky_cache: OrderedDict = OrderedDict()

    @property
    def n_params(self) -> int:
        return 9 if self.mode == "lm" else 4

    @property
    def range_keys(self):
        return RANGE_KEYS if self.mode == "lm" else RANGE_KEYS[2:3] + RANGE_KEYS[6:]

    @staticmethod
    def _cached(cache: OrderedDict, key, build):
        if key in cache:
            cache.move_to_end(key)
            return cache[key]
        val = build()
        cache[key] = val
        if len(cache) > 64:
            cache.popitem(last=False)
        return val

    def prefetch(self, naturals) -> None:
        """Render every uncached shape needed by ``naturals`` in one matrix product each."""
        if self.mode == "lm":
            sun_keys = {(float(p[0]), float(p[1])) for p in naturals} - set(self._sun_cache)
            sky_keys = {float(p[2]) for p in naturals} - set(self._sky_cache)
        else:
            sun_keys, sky_keys = set(), {float(p[0]) for p in naturals} - set(self._sky_cache)
        n_up = self.T.n_upper
        jobs = [
            (self._sun_cache, sorted(sun_keys),
             lambda k: sun_shape_map(self.sun_pos, k[0], k[1], self.height, self.supersample)),
            (self._sky_cache, sorted(sky_keys),
             lambda k: sky_ratio_map(self.sun_pos, k, self.height)),
        ]
        for cache, keys, shape in jobs:
            if not keys:
                continue
            maps = np.stack([shape(k).reshape(-1)[:n_up] for k in keys], axis=1)
            renders = self.T.upper64() @ maps
            for j, k in enumerate(keys):
                self._cached(cache, k, lambda: np.ascontiguousarray(renders[:, j]))

    def sun_render(self, beta: float, kappa: float) -> np.ndarray:
        def build():
            s = sun_shape_map(self.sun_pos, beta, kappa, self.height, self.supersample)
            s = s.reshape(-1)[: self.T.n_upper]
            # narrow lobes touch few texels; drop the negligible tail
            idx = np.flatnonzero(s > 1e-12 * s.max()) if s.max() > 0 else np.zeros(0, int)
            if idx.size < s.size // 4:
                return self.T.upper64()[:, idx] @ s[idx]
            return self.T.upper64() @ s
        return self._cached(self._sun_cache, (float(beta), float(kappa)), build)

    def sky_render(self, turbidity: float) -> np.ndarray:
        def build():
            k = sky_ratio_map(self.sun_pos, turbidity, self.height)
            return self.T.upper64() @ k.reshape(-1)[: self.T.n_upper]
        return self._cached(self._sky_cache, float(turbidity), build)

    def residual(self, natural: np.ndarray) -> np.ndarray:
        p = np.asarray(natural, dtype=float)
        if self.mode == "sky":
            sky = np.outer(self.sky_render(p[0]), p[1:4])
            return (self.s_plain * (self.r_ldr - sky)).ravel()
        sun = np.outer(self.sun_render(p[0], p[1]), p[3:6])
        sky = np.outer(self.sky_render(p[2]), p[6:9])
        return np.concatenate([
            (self.s_lm * (self.r_hdr - sun - sky)).ravel(),
            (self.s_sky * (self.r_ldr - sky)).ravel(),
            (self.s_sun * (self.r_diff - sun)).ravel(),
        ])

    def loss(self, natural: np.ndarray) -> float:
        r = self.residual(natural)
        return float(r @ r)

    def zero_loss(self) -> float:
        """Loss of an all-zero prediction (the target's weighted energy)."""
        if self.mode == "sky":
            return float(self.s_plain ** 2 * np.sum(self.r_ldr ** 2))
        return float(self.s_lm ** 2 * np.sum(self.r_hdr ** 2) + self.s_sky ** 2 * np.sum(self.r_ldr ** 2)
                     + self.s_sun ** 2 * np.sum(self.r_diff ** 2))

    def profile_colours(self, beta: float, kappa: float, turbidity: float):
        """Best non-negative (w_sun, w_sky) per channel for fixed shape; returns (w_sun, w_sky, loss).

        The residual is linear in the colour weights, so each channel is a
        two-variable non-negative least-squares problem.
        """
        S = self.sun_render(beta, kappa)
        K = self.sky_render(turbidity)
        a2, b2, c2 = self.s_lm ** 2, self.s_sky ** 2, self.s_sun ** 2
        ss, kk, sk = S @ S, K @ K, S @ K
        G = np.array([[(a2 + c2) * ss, a2 * sk], [a2 * sk, (a2 + b2) * kk]])
        w_sun, w_sky, total = np.zeros(3), np.zeros(3), 0.0
        for c in range(3):
            h, l, d = self.r_hdr[:, c], self.r_ldr[:, c], self.r_diff[:, c]
            rhs = np.array([a2 * (S @ h) + c2 * (S @ d), a2 * (K @ h) + b2 * (K @ l)])
            const = a2 * (h @ h) + b2 * (l @ l) + c2 * (d @ d)
            cands = [np.zeros(2)]
            if G[0, 0] > 0:
                cands.append(np.array([max(rhs[0] / G[0, 0], 0.0), 0.0]))
            if G[1, 1] > 0:
                cands.append(np.array([0.0, max(rhs[1] / G[1, 1], 0.0)]))
            if abs(np.linalg.det(G)) > 1e-12 * max(G[0, 0] * G[1, 1], 1e-300):
                x = np.linalg.solve(G, rhs)
                if np.all(x >= 0):
                    cands.append(x)
            vals = [float(x @ G @ x - 2 * rhs @ x + const) for x in cands]
            k = int(np.argmin(vals))
            w_sun[c], w_sky[c] = cands[k]
            total += vals[k]
        return w_sun, w_sky, max(total, 0.0)


def _jacobian(fun, x: np.ndarray, lo: np.ndarray, hi: np.ndarray, step: float, prefetch=None):
    """Central differences in transformed coordinates, one-sided at the bounds."""
    probes = []
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i], xm[i] = min(x[i] + step, hi[i]), max(x[i] - step, lo[i])
        probes.append((xp, xm))
    if prefetch is not None:
        prefetch([x] + [z for pair in probes for z in pair])
    r0 = fun(x)
    J = np.empty((r0.size, x.size))
    for i, (xp, xm) in enumerate(probes):
        J[:, i] = (fun(xp) - fun(xm)) / (xp[i] - xm[i])
    return r0, J


def numerical_gradient(objective: RenderObjective, transform: ParamTransform, x: np.ndarray,
                       step: float = 1e-4) -> np.ndarray:
    """Gradient of the loss in transformed coordinates, as used by the optimiser."""
    fun = lambda z: objective.residual(transform.inverse(z))
    pre = lambda zs: objective.prefetch([transform.inverse(z) for z in zs])
    r, J = _jacobian(fun, np.asarray(x, dtype=float), transform.lo, transform.hi, step, pre)
    return 2.0 * J.T @ r


def _levenberg_marquardt(fun, x0, lo, hi, cfg: FitConfig, prefetch=None):
    """Box-constrained LM; returns (x, loss, iterations, converged, accepted-loss history)."""
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    r = fun(x)
    f = float(r @ r)
    history = [f]
    lam = 1e-3
    converged = False
    it = 0
    while it < cfg.max_iterations and f > 0.0:
        it += 1
        r, J = _jacobian(fun, x, lo, hi, cfg.fd_step, prefetch)
        g = J.T @ r
        A = J.T @ J
        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~active
        if not free.any():
            converged = True
            break
        Af = A[np.ix_(free, free)]
        gf = g[free]
        diag = np.diag(Af).copy()
        diag[diag <= 0] = 1e-12
        accepted = False
        while lam < 1e12:
            try:
                step = np.linalg.solve(Af + lam * np.diag(diag), -gf)
            except np.linalg.LinAlgError:
                lam *= 4.0
                continue
            x_new = x.copy()
            x_new[free] += step
            x_new = np.clip(x_new, lo, hi)
            r_new = fun(x_new)
            f_new = float(r_new @ r_new)
            if f_new < f:
                accepted = True
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 4.0
        if not accepted:
            converged = True
            break
        rel = (f - f_new) / f
        x, f = x_new, f_new
        history.append(f)
        if rel < cfg.tolerance:
            converged = True
            break
    if f == 0.0:
        converged = True
    return x, f, it, converged, history


def _best_of_restarts(objective: RenderObjective, transform: ParamTransform,
                      x0: np.ndarray, cfg: FitConfig, extra_starts=()):
    """Run LM from ``x0``, then from ``extra_starts``, then from seeded perturbations of ``x0``."""
    rng = np.random.default_rng(cfg.seed)
    fun = lambda z: objective.residual(transform.inverse(z))
    pre = lambda zs: objective.prefetch([transform.inverse(z) for z in zs])
    starts = [x0, *extra_starts]
    best = None
    for k in range(cfg.restarts):
        if k < len(starts):
            start = starts[k]
        else:
            start = x0 + rng.normal(0.0, cfg.restart_sigma, size=x0.size)
        start = np.clip(start, transform.lo, transform.hi)
        x, f, it, conv, hist = _levenberg_marquardt(fun, start, transform.lo, transform.hi, cfg, pre)
        if best is None or f < best[1]:
            best = (x, f, it, conv, hist, k)
    return best


def _ldr_env(p_hdr: EnvMap) -> EnvMap:
    return EnvMap.from_ldr(ldr_simulate(p_hdr, 1.0, gamma_encode=False))


def _initial_guess(p_hdr: EnvMap, p_ldr: EnvMap, ranges: ParamRanges) -> np.ndarray:
    h = p_hdr.height
    top = p_hdr.data[: max(h // 4, 1)].reshape(-1, 3).astype(np.float64)
    sat = np.all(p_ldr.data[: h // 2] >= DEFAULT_SATURATION / 255.0 - 1e-6, axis=2)
    top_sat = sat[: max(h // 4, 1)].reshape(-1)
    sky_px = top[~top_sat] if (~top_sat).any() else top
    w_sky = sky_px.mean(axis=0)
    upper = p_hdr.data[: h // 2].astype(np.float64)
    w_sun = upper[sat].mean(axis=0) if sat.any() else np.zeros(3)
    return _clip_natural(np.concatenate([[40.0, 0.1, 3.0], w_sun, w_sky]), ranges)


# coarse shape grid for the profiled start; colours are solved in closed form
_GRID_BETA = (3.0, 15.0, 60.0, 180.0)
_GRID_KAPPA = (0.02, 0.06, 0.2, 0.6)
_GRID_TURBIDITY = (2.5, 4.0, 7.0, 12.0, 18.0)


def _profiled_start(objective: RenderObjective, ranges: ParamRanges) -> np.ndarray:
    best = None
    for t in _GRID_TURBIDITY:
        for beta in _GRID_BETA:
            for kappa in _GRID_KAPPA:
                w_sun, w_sky, f = objective.profile_colours(beta, kappa, t)
                if best is None or f < best[0]:
                    best = (f, np.concatenate([[beta, kappa, t], w_sun, w_sky]))
    return _clip_natural(best[1], ranges)


def _sunless_start(init: np.ndarray, ranges: ParamRanges) -> np.ndarray:
    nat = init.copy()
    nat[3:6] = 0.0
    return _clip_natural(nat, ranges)


def _clip_natural(nat: np.ndarray, ranges: ParamRanges) -> np.ndarray:
    lo = np.array([getattr(ranges, k)[0] for k in RANGE_KEYS])
    hi = np.array([getattr(ranges, k)[1] for k in RANGE_KEYS])
    return np.clip(nat, lo, hi)


def _natural_to_params(nat: np.ndarray, sun_pos: SunPosition) -> LMParams:
    return LMParams(
        sun_pos,
        SunParams(tuple(nat[3:6]), float(nat[0]), float(nat[1])),
        SkyParams(tuple(nat[6:9]), float(nat[2])),
    )


def _grid_sun_position(T, p_hdr, p_ldr, init_nat, weights) -> SunPosition:
    """Coarse-to-fine search over the (16 x 64) sun bins at the initial parameters."""
    de = (math.pi / 2) / ELEVATION_BINS
    da = 2 * math.pi / AZIMUTH_BINS

    def score(ie, ia):
        pos = SunPosition(math.pi / 2 - (ie + 0.5) * de, (ia + 0.5) * da)
        return RenderObjective(T, p_hdr, p_ldr, pos, weights).loss(init_nat), pos

    coarse = [(ie, ia) for ie in range(1, ELEVATION_BINS, 4) for ia in range(2, AZIMUTH_BINS, 4)]
    best = min(coarse, key=lambda c: score(*c)[0])
    fine = [
        (ie, ia % AZIMUTH_BINS)
        for ie in range(max(best[0] - 2, 0), min(best[0] + 3, ELEVATION_BINS))
        for ia in range(best[1] - 2, best[1] + 3)
    ]
    return min((score(*c) for c in fine), key=lambda s: s[0])[1]


def _report_losses(T, p_hdr, p_ldr, params) -> dict:
    l_sky, l_sun, l_lm = lm_render_losses(T, p_hdr, p_ldr, params)
    return {
        "sky": l_sky,
        "sun": l_sun,
        "lm": l_lm,
        "pano_l1": pano_l1(p_hdr, render_envmap(params, p_hdr.height)),
    }


def fit_lm_to_hdr(p_hdr: EnvMap, T: TransportMatrix, sun_hint: Optional[SunPosition] = None,
                  cfg: FitConfig = FitConfig()) -> FitResult:
    """Fit the 9 radiometric LM parameters to an HDR panorama, sun position held fixed."""
    T.check_env(p_hdr.data.shape)
    p_ldr = _ldr_env(p_hdr)
    init = _initial_guess(p_hdr, p_ldr, cfg.ranges)

    if sun_hint is not None:
        sun_pos, source = sun_hint, "hint"
    else:
        sun_pos = detect_sun(ldr_simulate(p_hdr, 1.0))
        source = "detected"
        if sun_pos is None:
            if not np.any(p_hdr.data):
                sun_pos = SunPosition(0.0, 0.0)
            else:
                sun_pos = _grid_sun_position(T, p_hdr, p_ldr, init, cfg.weights)
            source = "grid"

    if not np.any(p_hdr.data):
        r = cfg.ranges
        params = LMParams(sun_pos, SunParams((0.0,) * 3, r.beta[0], r.kappa[0]),
                          SkyParams((0.0,) * 3, r.turbidity[0]))
        return FitResult(params, _report_losses(T, p_hdr, p_ldr, params), 0, 0, True, source,
                         history=[0.0])

    objective = RenderObjective(T, p_hdr, p_ldr, sun_pos, cfg.weights, "lm")
    transform = ParamTransform(cfg.ranges, RANGE_KEYS, cfg.log_transform)
    extra = [transform.forward(_profiled_start(objective, cfg.ranges)),
             transform.forward(_sunless_start(init, cfg.ranges))]
    x, f, it, conv, hist, k = _best_of_restarts(objective, transform, transform.forward(init), cfg,
                                                extra)
    nat = _prune_sun(objective, transform.snap(x), cfg.ranges)
    params = _natural_to_params(nat, sun_pos)
    return FitResult(params, _report_losses(T, p_hdr, p_ldr, params), it, k, conv, source,
                     history=hist)


SUN_PRUNE_RTOL = 1e-3


def _prune_sun(objective: RenderObjective, nat: np.ndarray, ranges: ParamRanges) -> np.ndarray:
    """Zero a sun whose removal costs under SUN_PRUNE_RTOL of the loss.

    A lobe much narrower than a texel carries almost no flux and its radiance
    is then unidentifiable; reporting it as absent is the honest answer.
    """
    if not np.any(nat[3:6]):
        return nat
    without = nat.copy()
    without[3:6] = 0.0
    without[0] = ranges.beta[0]
    f_with, f_without = objective.loss(nat), objective.loss(without)
    # the absolute term is the LDR quantisation floor relative to the signal
    floor = 1e-6 * objective.zero_loss()
    return without if f_without - f_with <= SUN_PRUNE_RTOL * f_with + floor else nat


def fit_sky_to_ldr(p_ldr: LdrImage, sun_pos: SunPosition, T: TransportMatrix,
                   cfg: FitConfig = FitConfig(), p_hdr: Optional[EnvMap] = None) -> FitResult:
    """Fit turbidity and sky colour to an LDR panorama; sun parameters stay zero.

    ``p_hdr``, when given, is only used to report the full LM losses.
    """
    ldr_env = EnvMap.from_ldr(p_ldr)
    T.check_env(ldr_env.data.shape)
    keys = RANGE_KEYS[2:3] + RANGE_KEYS[6:]
    r = cfg.ranges
    zero_sun = SunParams((0.0,) * 3, r.beta[0], r.kappa[0])
    if not np.any(ldr_env.data):
        params = LMParams(sun_pos, zero_sun, SkyParams((0.0,) * 3, r.turbidity[0]))
        it, k, conv, hist = 0, 0, True, [0.0]
    else:
        objective = RenderObjective(T, ldr_env, ldr_env, sun_pos, cfg.weights, "sky")
        transform = ParamTransform(cfg.ranges, keys, cfg.log_transform)
        init = _initial_guess(ldr_env, ldr_env, cfg.ranges)
        x0 = transform.forward(np.concatenate([[3.0], init[6:9]]))
        x, f, it, conv, hist, k = _best_of_restarts(objective, transform, x0, cfg)
        nat = transform.snap(x)
        params = LMParams(sun_pos, zero_sun, SkyParams(tuple(nat[1:4]), float(nat[0])))
    reference = p_hdr if p_hdr is not None else ldr_env
    return FitResult(params, _report_losses(T, reference, _ldr_env(reference), params), it, k,
                     conv, "hint", sky_only=True, history=hist)


def softness_of_pano(p_hdr: EnvMap, sun_pos: SunPosition, T: TransportMatrix,
                     scene: ProbeScene = ProbeScene(),
                     cfg: SoftnessConfig = SoftnessConfig()) -> tuple[float, int]:
    """Softness bucket of a panorama's probe render with its sun rolled to the centre column."""
    rolled = roll_columns(p_hdr, roll_shift(sun_pos.azimuth, p_hdr.width))
    return shadow_softness(render_probe(T, rolled), T, scene, cfg)


def label_record(path: Path, result: FitResult, softness: int, cfg: FitConfig) -> dict:
    return {
        "file": path.name,
        "params": result.params.to_json(),
        "sun_detected": result.sun_detected,
        "losses": result.losses,
        "softness": softness,
        "converged": result.converged,
        "restarts": cfg.restarts,
        "restart_winner": result.restart,
        "iterations": result.iterations,
        "sun_source": result.sun_source,
    }


def label_dataset(directory, cfg: FitConfig, out, T: TransportMatrix,
                  scene: ProbeScene = ProbeScene(),
                  softness_cfg: SoftnessConfig = SoftnessConfig()) -> int:
    """Fit every ``*.pfm`` in ``directory`` (sorted) and write one JSONL record each.

    Returns the number of records written, error records included.
    """
    from .imageio import read_envmap

    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidInputError(f"not a readable directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".pfm")
    count = 0
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{LABEL_HEADER} seed={cfg.seed} restarts={cfg.restarts}\n")
        for path in files:
            try:
                pano = read_envmap(path)
                result = fit_lm_to_hdr(pano, T, None, cfg)
                _, bucket = softness_of_pano(pano, result.params.sun_pos, T, scene, softness_cfg)
                record = label_record(path, result, bucket, cfg)
            except (LMSkyError, OSError, ValueError) as exc:
                log.warning("labeling %s failed: %s", path.name, exc)
                record = {"file": path.name, "error": f"{type(exc).__name__}: {exc}"}
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            count += 1
    return count


def read_labels(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                records.append(json.loads(line))
    return records
