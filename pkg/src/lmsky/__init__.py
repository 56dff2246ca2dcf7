"""Parametric outdoor illumination: sun and sky model, probe-scene transport, fitting and evaluation."""

from .envmap import CropSpec, EnvMap, LdrImage, detect_sun, ldr_simulate
from .errors import LMSkyError
from .fit import FitConfig, FitResult, fit_lm_to_hdr, fit_sky_to_ldr, label_dataset
from .geometry import SunPosition
from .sky import LMParams, SkyParams, SunParams, eval_lm, eval_sky, eval_sun, render_envmap
from .transport import ProbeScene, TransportMatrix, build_transport, get_transport, render_probe

__version__ = "0.1.0"

__all__ = [
    "CropSpec",
    "EnvMap",
    "FitConfig",
    "FitResult",
    "LMParams",
    "LMSkyError",
    "LdrImage",
    "ProbeScene",
    "SkyParams",
    "SunParams",
    "SunPosition",
    "TransportMatrix",
    "build_transport",
    "detect_sun",
    "eval_lm",
    "eval_sky",
    "eval_sun",
    "fit_lm_to_hdr",
    "fit_sky_to_ldr",
    "get_transport",
    "label_dataset",
    "ldr_simulate",
    "render_envmap",
    "render_probe",
]
