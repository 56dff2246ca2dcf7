import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmsky.errors import GeometryMismatchError, InvalidInputError, UndefinedScaleError
from lmsky.geometry import SunPosition
from lmsky.metrics import (
    BUCKETS,
    REFERENCE_PARAMS,
    SoftnessConfig,
    bucketed_report,
    canonical,
    cumulative_curve,
    curve_csv,
    format_report,
    gradient_histogram,
    reference_render,
    report_json,
    rmse,
    shadow_softness,
    si_rmse,
    sun_angular_error,
)
from lmsky.sky import LMParams, SkyParams, SunParams, render_envmap, sun_lobe_solid_angle
from lmsky.transport import render_probe

vec = st.lists(st.floats(-10, 10), min_size=4, max_size=4)


def test_rmse_examples(rng):
    a = rng.random((4, 4, 3))
    assert rmse(a, a) == 0.0
    assert rmse(a, a + 0.3) == pytest.approx(0.3)
    b = rng.random((4, 4, 3))
    assert rmse(a, b) == rmse(b, a)
    with pytest.raises(GeometryMismatchError):
        rmse(a, a[:2])


def test_si_rmse_closed_form_against_sweep():
    a, b = np.array([1.0, 0.0]), np.array([1.0, 1.0])
    assert si_rmse(a, b) == pytest.approx(0.5, abs=1e-15)
    alphas = np.linspace(0.0, 1.0, 100001)
    brute = float(np.min(np.sqrt(np.mean((a[None, :] - alphas[:, None] * b[None, :]) ** 2, axis=1))))
    assert brute == pytest.approx(0.5, abs=1e-9)


def test_si_rmse_examples(rng):
    a = rng.random((8, 8, 3))
    assert si_rmse(a, a) == pytest.approx(0.0, abs=1e-15)
    assert si_rmse(a, 2 * a) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(UndefinedScaleError):
        si_rmse(a, np.zeros_like(a))


@settings(max_examples=200, deadline=None)
@given(a=vec, b=vec, c=st.floats(1e-3, 1e3))
def test_si_rmse_scale_invariant_and_bounded(a, b, c):
    a, b = np.array(a), np.array(b)
    if not np.any(b):
        return
    assert si_rmse(a, c * b) == pytest.approx(si_rmse(a, b), rel=1e-7, abs=1e-12)
    assert si_rmse(a, b) <= rmse(a, b) + 1e-12


def test_sun_angular_error_examples():
    z = SunPosition(0.0, 0.0)
    h = SunPosition(math.pi / 2, 0.0)
    assert sun_angular_error(z, z) == 0.0
    assert sun_angular_error(z, h) == pytest.approx(math.pi / 2)
    assert sun_angular_error(h, SunPosition(math.pi / 2, math.pi)) == pytest.approx(math.pi)


@settings(max_examples=200, deadline=None)
@given(*[st.floats(0, math.pi / 2), st.floats(0, 2 * math.pi)] * 3)
def test_sun_angular_error_is_metric(z1, a1, z2, a2, z3, a3):
    p, q, r = SunPosition(z1, a1), SunPosition(z2, a2), SunPosition(z3, a3)
    assert sun_angular_error(p, q) == pytest.approx(sun_angular_error(q, p), abs=1e-12)
    assert sun_angular_error(p, r) <= sun_angular_error(p, q) + sun_angular_error(q, r) + 1e-7


def test_cumulative_curve():
    grid = np.linspace(0, 1, 11)
    assert np.all(cumulative_curve([0.0, 0.0], grid) == 1.0)
    step = cumulative_curve([0.5], grid)
    assert step.tolist() == [0.0] * 5 + [1.0] * 6
    c = cumulative_curve([0.9, 0.1, 0.35, 0.35], grid)
    assert np.all(np.diff(c) >= 0) and c[-1] == 1.0
    with pytest.raises(InvalidInputError):
        cumulative_curve([], grid)


def test_curve_csv():
    text = curve_csv([0.0, 1.0], [0.25, 1.0])
    assert text.splitlines() == ["threshold,fraction", "0.0,0.25", "1.0,1.0"]


def test_softness_config_validation():
    with pytest.raises(InvalidInputError):
        SoftnessConfig(cut_low=0.5, cut_high=0.1)
    with pytest.raises(InvalidInputError):
        SoftnessConfig(bins=4)


def test_reference_against_itself(T64, scene):
    kl, bucket = shadow_softness(reference_render(T64), T64, scene)
    assert kl == 0.0 and bucket == 1


def test_overcast_is_bucket_3(T64, scene):
    q = LMParams(SunPosition(0.6, 0.0), SunParams((0.0,) * 3, 0.0, 1.0), SkyParams((0.8, 0.9, 1.0), 12.0))
    render = render_probe(T64, render_envmap(canonical(q, T64.env_width), 64))
    kl, bucket = shadow_softness(render, T64, scene)
    assert kl > SoftnessConfig().cut_high and bucket == 3


def test_softness_kl_grows_as_sun_widens(T64, scene):
    """Beta sweep at fixed sun flux: the shadow only ever gets softer."""
    sky = SkyParams((1.0, 1.0, 1.0), 2.5)
    pos = canonical(LMParams(SunPosition(math.radians(45.0), 0.0)), T64.env_width).sun_pos
    kls = []
    for beta in np.geomspace(200.0, 1.0, 12):
        w = 3.0 / sun_lobe_solid_angle(beta, 0.3)
        q = LMParams(pos, SunParams((w, w, w), float(beta), 0.3), sky)
        kls.append(shadow_softness(render_probe(T64, render_envmap(q, 64)), T64, scene)[0])
    assert all(b >= a for a, b in zip(kls, kls[1:]))


def test_softness_size_mismatch(T64, scene):
    with pytest.raises(InvalidInputError):
        shadow_softness(np.zeros((32, 32, 3)), T64, scene)


def test_gradient_histogram_normalised(rng):
    band = rng.random((5, 64)) + 1.0
    for k in (0.0, 2.0):
        h = gradient_histogram(band, 32, (0.0, 1.0), k)
        assert h.shape == (32,) and h.sum() == pytest.approx(1.0) and np.all(h > 0)


def test_reference_params():
    ref = REFERENCE_PARAMS
    assert (ref.sun.beta, ref.sun.kappa, ref.sky.turbidity) == (120.0, 0.02, 2.5)
    assert ref.sun_pos.zenith_angle == pytest.approx(math.radians(45.0))


def test_bucketed_report_examples(rng):
    gt = [rng.random((4, 4, 3)) + 0.1 for _ in range(3)]
    same = bucketed_report([(g, g, b) for g, b in zip(gt, (1, 2, 3))])
    for metric in ("rmse", "si_rmse"):
        for b in BUCKETS:
            assert same[metric][b]["median"] == pytest.approx(0.0, abs=1e-12)
    preds = [g * 1.1 + 0.05 for g in gt]
    rep = bucketed_report([(g, p, b) for g, p, b in zip(gt, preds, (1, 2, 3))])
    for g, p, b in zip(gt, preds, ("1", "2", "3")):
        assert rep["rmse"][b]["median"] == pytest.approx(rmse(g, p))
        assert rep["si_rmse"][b]["median"] == pytest.approx(si_rmse(g, p))
        assert rep["rmse"][b]["n"] == 1
    assert rep["rmse"]["all"]["n"] == 3


def test_bucketed_report_errors_and_empty_bucket(rng):
    with pytest.raises(InvalidInputError):
        bucketed_report([])
    g = rng.random((2, 2, 3))
    with pytest.raises(InvalidInputError):
        bucketed_report([(g, g, 4)])
    rep = bucketed_report([(g, g, 1)])
    assert rep["rmse"]["2"] is None


def test_report_layout(rng):
    g = rng.random((2, 2, 3))
    rep = bucketed_report([(g, g, 1), (g, 0.5 * g, 3)])
    lines = format_report(rep).splitlines()
    assert lines[0].split() == ["metric", "1", "2", "3", "all"]
    assert [ln.split()[0] for ln in lines[1:]] == ["rmse", "si_rmse"]
    assert set(json.loads(report_json(rep))) == {"rmse", "si_rmse"}
