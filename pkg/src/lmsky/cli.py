"""Command-line entry point: render, simulate, detect, crop, fit, label and evaluate.

Every command is deterministic given its flags and ``--seed``. Settings are
resolved as flags > ``--config`` JSON > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import zlib
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .envmap import (
    DEFAULT_EXPOSURE_RANGE,
    DEFAULT_SATURATION,
    EnvMap,
    LdrImage,
    detect_sun,
    extract_crop,
    ldr_simulate,
    make_crop_set,
    random_exposure,
    roll_to_center,
    tonemap_preview,
)
from .errors import InvalidInputError, LMSkyError
from .fit import FitConfig, FitResult, fit_lm_to_hdr, fit_sky_to_ldr, label_dataset, read_labels
from .geometry import SunPosition
from .imageio import read_envmap, read_image, read_pfm_array, write_envmap, write_pfm_array, write_png
from .losses import AZIMUTH_BINS, ELEVATION_BINS, LossWeights, ParamRanges
from .metrics import (
    SoftnessConfig,
    bucketed_report,
    canonical,
    cumulative_curve,
    curve_csv,
    format_report,
    report_json,
    shadow_softness,
    sun_angular_error,
)
from .sky import LMParams, render_envmap
from .transport import ProbeScene, get_transport, render_probe

log = logging.getLogger("lmsky")

DEFAULTS = {
    "seed": 0,
    "env_height": 64,
    "probe_size": 64,
    "restarts": 3,
    "max_iterations": 100,
    "tolerance": 1e-6,
}
CURVE_GRID_DEG = tuple(float(d) for d in range(0, 181))


def task_seed(seed: int, label: str) -> int:
    """Independent, stable 64-bit seed for one named task of an invocation."""
    ss = np.random.SeedSequence([seed, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def task_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(task_seed(seed, label))


class Settings:
    """Resolved global options plus the optional config file sections."""

    def __init__(self, args: argparse.Namespace):
        cfg = {}
        if args.config:
            with open(args.config, encoding="utf-8") as f:
                cfg = json.load(f)
            if not isinstance(cfg, dict):
                raise InvalidInputError("config file must hold a JSON object")
        self.config = cfg
        fit_cfg = cfg.get("fit", {})

        def pick(name, section=cfg):
            val = getattr(args, name, None)
            if val is not None:
                return val
            return section.get(name, DEFAULTS[name])

        self.seed = int(pick("seed"))
        self.env_height = int(pick("env_height"))
        self.probe_size = int(pick("probe_size"))
        self.cache_dir = args.cache_dir or cfg.get("cache_dir")
        self.restarts = int(pick("restarts", fit_cfg))
        self.max_iterations = int(pick("max_iterations", fit_cfg))
        self.tolerance = float(pick("tolerance", fit_cfg))
        self.ranges = ParamRanges.from_json(cfg.get("ranges", {}))
        self.weights = LossWeights.from_json(cfg.get("weights", {}))
        soft = cfg.get("softness", {})
        self.softness = SoftnessConfig(**{
            k: (tuple(v) if k == "grad_range" else v)
            for k, v in soft.items()
            if k in ("band_rows", "bins", "grad_range", "kernel_bins", "cut_low", "cut_high")
        })
        self.scene = ProbeScene(render_size=self.probe_size)

    def transport(self):
        return get_transport(self.scene, self.env_height, self.cache_dir)

    def fit_config(self) -> FitConfig:
        return FitConfig(
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            restarts=self.restarts,
            seed=task_seed(self.seed, "fit"),
            weights=self.weights,
            ranges=self.ranges,
        )


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_params(path) -> LMParams:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not valid JSON ({exc})") from exc
    return LMParams.from_json(obj)


def _hdr_input(path, height: int) -> EnvMap:
    """An HDR panorama, or LM parameters rendered at ``height``."""
    if Path(path).suffix.lower() == ".json":
        return render_envmap(_read_params(path), height)
    return read_envmap(path)


def _sun_from_flags(args) -> Optional[SunPosition]:
    if args.sun_zenith is None and args.sun_azimuth is None:
        return None
    if args.sun_zenith is None or args.sun_azimuth is None:
        raise InvalidInputError("give both --sun-zenith and --sun-azimuth (degrees)")
    return SunPosition(math.radians(args.sun_zenith), math.radians(args.sun_azimuth))


def _fit_json(result: FitResult) -> dict:
    return {
        "params": result.params.to_json(),
        "losses": result.losses,
        "iterations": result.iterations,
        "restart": result.restart,
        "converged": result.converged,
        "sun_source": result.sun_source,
        "sky_only": result.sky_only,
    }


def cmd_render(args, st: Settings) -> int:
    height = args.height or st.env_height
    env = render_envmap(_read_params(args.params), height)
    write_envmap(args.out, env)
    if args.preview:
        write_png(args.preview, tonemap_preview(env.data))
    return 0


def cmd_probe(args, st: Settings) -> int:
    env = _hdr_input(args.input, st.env_height)
    img = render_probe(st.transport(), env).astype(np.float32)
    write_pfm_array(args.out, img)
    if args.preview:
        write_png(args.preview, tonemap_preview(img))
    return 0


def cmd_ldr_sim(args, st: Settings) -> int:
    pano = read_envmap(args.input)
    if args.exposure is not None:
        exposure, source = args.exposure, "fixed"
    else:
        lo, hi = args.exposure_range or DEFAULT_EXPOSURE_RANGE
        exposure, source = random_exposure(task_rng(st.seed, "ldr-sim"), lo, hi), "random"
    write_png(args.out, ldr_simulate(pano, exposure, gamma_encode=args.gamma))
    sidecar = Path(args.out).with_suffix(".json")
    _write_json(sidecar, {
        "exposure": exposure,
        "source": source,
        "range": list(args.exposure_range or DEFAULT_EXPOSURE_RANGE) if source == "random" else None,
        "gamma_encode": args.gamma,
        "seed": st.seed,
    })
    return 0


def cmd_crop(args, st: Settings) -> int:
    pano = read_image(args.input)
    specs = make_crop_set(task_seed(st.seed, "crop"), args.count, math.radians(args.fov),
                          math.radians(args.elevation), args.width, args.height)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hdr = isinstance(pano, EnvMap)
    names = []
    for i, spec in enumerate(specs):
        name = f"crop_{i:02d}.{'pfm' if hdr else 'png'}"
        crop = extract_crop(pano, spec)
        if hdr:
            write_pfm_array(out / name, crop)
        else:
            write_png(out / name, crop)
        names.append(name)
    _write_json(out / "crops.json", {
        "source": Path(args.input).name,
        "crops": [dict(spec.to_json(), file=n) for spec, n in zip(specs, names)],
    })
    return 0


def cmd_sun_detect(args, st: Settings) -> int:
    pano = read_image(args.input)
    ldr = pano if isinstance(pano, LdrImage) else ldr_simulate(pano, 1.0)
    pos = detect_sun(ldr, args.threshold)
    if pos is None:
        obj = {"detected": False}
    else:
        de = (math.pi / 2) / ELEVATION_BINS
        da = 2 * math.pi / AZIMUTH_BINS
        obj = {
            "detected": True,
            "sun_zenith": pos.zenith_angle,
            "sun_azimuth": pos.azimuth,
            "elevation_bin": min(int(pos.elevation / de), ELEVATION_BINS - 1),
            "azimuth_bin": int(pos.azimuth / da) % AZIMUTH_BINS,
        }
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_softness(args, st: Settings) -> int:
    T = st.transport()
    if Path(args.input).suffix.lower() == ".json":
        params = canonical(_read_params(args.input), T.env_width)
        render = render_probe(T, render_envmap(params, st.env_height))
    else:
        render = read_pfm_array(args.input)
    kl, bucket = shadow_softness(render, T, st.scene, st.softness)
    text = json.dumps({"kl": kl, "bucket": bucket}, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_fit_hdr(args, st: Settings) -> int:
    pano = read_envmap(args.input)
    result = fit_lm_to_hdr(pano, st.transport(), _sun_from_flags(args), st.fit_config())
    _write_json(args.out, _fit_json(result))
    return 0


def cmd_fit_sky_ldr(args, st: Settings) -> int:
    img = read_image(args.input)
    ldr = img if isinstance(img, LdrImage) else ldr_simulate(img, 1.0)
    sun = _sun_from_flags(args) or detect_sun(ldr)
    if sun is None:
        raise InvalidInputError("no sun detected; pass --sun-zenith and --sun-azimuth")
    result = fit_sky_to_ldr(ldr, sun, st.transport(), st.fit_config())
    _write_json(args.out, _fit_json(result))
    return 0


def cmd_label(args, st: Settings) -> int:
    n = label_dataset(args.dir, st.fit_config(), args.out, st.transport(), st.scene, st.softness)
    errors = sum(1 for r in read_labels(args.out) if "error" in r)
    if errors:
        print(f"lmsky label: {errors} of {n} panoramas failed (see error records)", file=sys.stderr)
    return 0


def cmd_eval(args, st: Settings) -> int:
    T = st.transport()
    gt_dir = Path(args.gt_dir)
    pairs, errors, sun_errors = [], [], []
    for rec in read_labels(args.labels):
        name = rec.get("file", "?")
        if "error" in rec:
            errors.append({"file": name, "error": rec["error"]})
            continue
        try:
            params = LMParams.from_json(rec["params"])
            gt_env = read_envmap(gt_dir / name)
            gt = render_probe(T, gt_env)
            pred = render_probe(T, render_envmap(params, gt_env.height))
            centred = render_probe(T, roll_to_center(gt_env, params.sun_pos.azimuth))
            _, bucket = shadow_softness(centred, T, st.scene, st.softness)
            pairs.append((gt, pred, bucket))
            gt_params = gt_dir / (Path(name).stem + ".json")
            if gt_params.exists():
                sun_errors.append(sun_angular_error(_read_params(gt_params).sun_pos, params.sun_pos))
        except (LMSkyError, OSError, KeyError, ValueError) as exc:
            errors.append({"file": name, "error": f"{type(exc).__name__}: {exc}"})
    if not pairs:
        raise InvalidInputError("no label record could be evaluated")
    report = bucketed_report(pairs)
    out = dict(report, errors=errors, n_evaluated=len(pairs))
    Path(args.out).write_text(report_json(out), encoding="utf-8")
    table = format_report(report)
    if args.table:
        Path(args.table).write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    if args.curve:
        if not sun_errors:
            log.warning("no ground-truth parameter files found; sun-error curve not written")
        else:
            grid = np.radians(CURVE_GRID_DEG)
            Path(args.curve).write_text(curve_csv(CURVE_GRID_DEG, cumulative_curve(sun_errors, grid)),
                                        encoding="utf-8")
    if errors:
        print(f"lmsky eval: {len(errors)} records could not be evaluated", file=sys.stderr)
    return 0


def _add_sun_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sun-zenith", type=float, help="sun zenith angle in degrees (skips detection)")
    p.add_argument("--sun-azimuth", type=float, help="sun azimuth in degrees")


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restarts", type=int, help=f"optimiser restarts (default {DEFAULTS['restarts']})")
    p.add_argument("--max-iterations", type=int,
                   help=f"iterations per restart (default {DEFAULTS['max_iterations']})")
    p.add_argument("--tolerance", type=float,
                   help=f"relative loss decrease to stop (default {DEFAULTS['tolerance']:g})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lmsky", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"lmsky {__version__}")
    ap.add_argument("--seed", type=int, help=f"invocation seed (default {DEFAULTS['seed']})")
    ap.add_argument("--env-height", type=int,
                    help=f"panorama height in texels (default {DEFAULTS['env_height']})")
    ap.add_argument("--probe-size", type=int,
                    help=f"probe render size in pixels (default {DEFAULTS['probe_size']})")
    ap.add_argument("--cache-dir", help="transport cache directory (default $LMSKY_CACHE_DIR or ~/.cache/lmsky)")
    ap.add_argument("--config", help="JSON with ranges / weights / softness / fit sections")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="LM parameters JSON to a PFM panorama")
    p.add_argument("params")
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, help="panorama height (default: --env-height)")
    p.add_argument("--preview", help="also write a gamma 2.2 PNG preview")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("probe", help="render the probe scene under a PFM panorama or params JSON")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--preview")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("ldr-sim", help="expose, clip and quantise a panorama to 8 bits")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exposure", type=float, help="fixed exposure factor")
    g.add_argument("--exposure-range", type=float, nargs=2, metavar=("LO", "HI"),
                   help="log-uniform random exposure (default 0.2 2.0)")
    p.add_argument("--gamma", action="store_true", help="gamma 2.2 encode (display only)")
    p.set_defaults(func=cmd_ldr_sim)

    p = sub.add_parser("crop", help="random-azimuth pinhole crops")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=7)
    p.add_argument("--fov", type=float, default=60.0, help="horizontal field of view, degrees")
    p.add_argument("--elevation", type=float, default=0.0, help="camera elevation, degrees")
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("sun-detect", help="centroid of the largest saturated region")
    p.add_argument("input")
    p.add_argument("--out")
    p.add_argument("--threshold", type=int, default=DEFAULT_SATURATION)
    p.set_defaults(func=cmd_sun_detect)

    p = sub.add_parser("softness", help="shadow-softness KL and bucket of a probe render")
    p.add_argument("input", help="probe render PFM (sun at centre column) or params JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_softness)

    p = sub.add_parser("fit-hdr", help="fit all LM parameters to an HDR panorama")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _add_sun_flags(p)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit_hdr)

    p = sub.add_parser("fit-sky-ldr", help="fit the sky part to an LDR panorama")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _add_sun_flags(p)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit_sky_ldr)

    p = sub.add_parser("label", help="fit every *.pfm in a directory, one JSONL record each")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("eval", help="bucketed RMSE / si-RMSE report for a label file")
    p.add_argument("--labels", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--table", help="aligned text table (default: stdout)")
    p.add_argument("--curve", help="cumulative sun angular error CSV (needs <stem>.json params)")
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        st = Settings(args)
        return args.func(args, st)
    except (LMSkyError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"lmsky {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
