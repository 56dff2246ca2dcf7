"""Derive the shadow-softness cut points from a seeded sweep of probe renders.

Renders 200 canonical-azimuth skies with random sun shape, sun zenith and
sun/sky balance, measures the shadow-band KL against the reference render,
and labels each render by the peak shadow-edge gradient relative to the
reference's: >= 0.8 is "sharp", <= 0.2 is "no shadow", the rest "mixed".
Each cut point is the threshold that misclassifies the fewest renders of the
two neighbouring regimes (ties broken toward the midpoint of the gap).

    python scripts/derive_softness_cuts.py [--seed 0] [--n 200]
"""

import argparse
import math

import numpy as np

from lmsky.geometry import SunPosition
from lmsky.metrics import SoftnessConfig, canonical, reference_render, shadow_band, shadow_softness
from lmsky.sky import LMParams, SkyParams, SunParams, render_components, sun_lobe_solid_angle
from lmsky.transport import ProbeScene, get_transport


def peak_gradient(render, scene):
    band = shadow_band(render, scene)
    return np.abs(np.gradient(band / band.mean(), axis=1)).max()


def best_cut(below, above):
    candidates = np.unique(np.concatenate([below, above]))
    mids = 0.5 * (candidates[1:] + candidates[:-1])
    errors = np.array([(below >= c).sum() + (above < c).sum() for c in mids])
    best = mids[errors == errors.min()]
    return float(best[len(best) // 2])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=200)
    args = ap.parse_args()

    scene = ProbeScene()
    T = get_transport(scene, 64)
    cfg = SoftnessConfig()
    ref_peak = peak_gradient(reference_render(T, cfg), scene)
    rng = np.random.default_rng(args.seed)
    rows = []
    for _ in range(args.n):
        beta = math.exp(rng.uniform(math.log(0.5), math.log(200)))
        kappa = math.exp(rng.uniform(math.log(0.01), math.log(1.0)))
        zenith = math.radians(rng.uniform(30, 70))
        sun_to_sky = 0.0 if rng.random() < 0.15 else math.exp(rng.uniform(math.log(0.1), math.log(5.0)))
        w_sun = sun_to_sky * math.pi / sun_lobe_solid_angle(beta, kappa)
        params = canonical(
            LMParams(SunPosition(zenith, 0.0), SunParams((w_sun,) * 3, beta, kappa),
                     SkyParams((1.0, 1.0, 1.0), rng.uniform(2, 10))),
            T.env_width,
        )
        sun, sky = render_components(params, T.env_height)
        render = (T.upper64() @ (sun + sky).reshape(-1, 3)[: T.n_upper]).reshape(64, 64, 3)
        kl, _ = shadow_softness(render, T, scene, cfg)
        rows.append((kl, peak_gradient(render, scene) / ref_peak))
    kl = np.array([r[0] for r in rows])
    rel = np.array([r[1] for r in rows])
    sharp, none = kl[rel >= 0.8], kl[rel <= 0.2]
    mixed = kl[(rel > 0.2) & (rel < 0.8)]
    print(f"sharp n={sharp.size} max KL={sharp.max():.4f}")
    print(f"mixed n={mixed.size} KL range=[{mixed.min():.4f}, {mixed.max():.4f}]")
    print(f"none  n={none.size} min KL={none.min():.4f}")
    cut_low = best_cut(sharp, mixed)
    cut_high = best_cut(mixed, none)
    print(f"CUT_LOW = {cut_low:.4f}")
    print(f"CUT_HIGH = {cut_high:.4f}")


if __name__ == "__main__":
    main()
