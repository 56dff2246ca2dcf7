import logging
import math

import numpy as np
import pytest

from lmsky.envmap import EnvMap
from lmsky.errors import CacheFormatError, GeometryMismatchError, InvalidInputError
from lmsky.transport import (
    CACHE_VERSION,
    ProbeScene,
    TransportMatrix,
    _cache_name,
    build_transport,
    get_transport,
    load_transport,
    render_probe,
    render_probe_oracle,
    save_transport,
)


def _uniform(h, value=1.0):
    return EnvMap(np.full((h, 2 * h, 3), value, np.float32))


def test_matches_brute_force_oracle(T16, small_scene, rng):
    env = EnvMap((rng.random((16, 32, 3)) * 2).astype(np.float32))
    fast = render_probe(T16, env)
    slow = render_probe_oracle(small_scene, env)
    assert np.max(np.abs(fast - slow) / np.maximum(np.abs(slow), 1e-12)) < 1e-5


def test_uniform_sky_plane_matches_analytic(T64, scene):
    """Plane irradiance under a unit sky minus the sphere's form factor h / D^3."""
    img = render_probe(T64, _uniform(64))[..., 0]
    x, z = scene.pixel_xz()
    xx, zz = np.meshgrid(x, z, indexing="ij")
    rho2 = xx ** 2 + zz ** 2
    plane = rho2 > 1.2 ** 2
    expected = 1.0 - 1.0 / (rho2 + 1.0) ** 1.5
    assert np.max(np.abs(img[plane] - expected[plane])) < 0.01


def test_uniform_sky_sphere_top_matches_analytic(T64, scene):
    img = render_probe(T64, _uniform(64))[..., 0]
    x, z = scene.pixel_xz()
    xx, zz = np.meshgrid(x, z, indexing="ij")
    rho2 = xx ** 2 + zz ** 2
    on = rho2 < 0.8 ** 2
    cos_zeta = np.sqrt(1.0 - rho2[on])
    assert np.max(np.abs(img[on] - (1 + cos_zeta) / 2)) < 0.01


def test_zero_env_and_linearity(T16, rng):
    assert np.all(render_probe(T16, EnvMap.zeros(16)) == 0)
    a = rng.random((16, 32, 3)).astype(np.float32)
    b = rng.random((16, 32, 3)).astype(np.float32)
    lhs = render_probe(T16, EnvMap(2 * a + b))
    rhs = 2 * render_probe(T16, EnvMap(a)) + render_probe(T16, EnvMap(b))
    assert np.allclose(lhs, rhs, rtol=1e-6, atol=1e-9)


def test_lower_hemisphere_is_ignored(T16):
    data = np.zeros((16, 32, 3), np.float32)
    data[8:] = 100.0
    assert np.all(render_probe(T16, EnvMap(data)) == 0)


def test_geometry_mismatch(T16):
    with pytest.raises(GeometryMismatchError):
        render_probe(T16, EnvMap.zeros(8))


def test_build_rejects_bad_height():
    with pytest.raises(InvalidInputError):
        build_transport(ProbeScene(render_size=4), 9)


def test_scene_validation():
    with pytest.raises(InvalidInputError):
        ProbeScene(half_extent=1.0)


def test_cache_round_trip(tmp_path, T16):
    path = tmp_path / "t.bin"
    save_transport(path, T16)
    back = load_transport(path)
    assert np.array_equal(back.matrix, T16.matrix)
    assert back.scene_hash == T16.scene_hash and back.env_height == 16


def test_cached_and_fresh_render_identically(tmp_path, small_scene, rng):
    fresh = build_transport(small_scene, 16)
    get_transport(small_scene, 16, tmp_path)
    cached = get_transport(small_scene, 16, tmp_path)
    env = EnvMap(rng.random((16, 32, 3)).astype(np.float32))
    assert np.array_equal(render_probe(fresh, env), render_probe(cached, env))


def test_cache_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTLMSKY" + b"\x00" * 100)
    with pytest.raises(CacheFormatError):
        load_transport(p)


def test_cache_version_mismatch_rebuilds_with_warning(tmp_path, small_scene, caplog):
    T = get_transport(small_scene, 16, tmp_path)
    path = tmp_path / _cache_name(small_scene, 16)
    raw = bytearray(path.read_bytes())
    raw[8:12] = (CACHE_VERSION + 1).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with caplog.at_level(logging.WARNING, logger="lmsky.transport"):
        again = get_transport(small_scene, 16, tmp_path)
    assert "version" in caplog.text
    assert np.array_equal(again.matrix, T.matrix)
    assert load_transport(path).matrix.shape == T.matrix.shape


def test_transport_shape_invariant():
    with pytest.raises(InvalidInputError):
        TransportMatrix(np.zeros((4, 5), np.float32), 8, 2)


def test_footprint_row(scene):
    x, _ = scene.pixel_xz()
    last = scene.footprint_last_row()
    assert x[last] <= 1.0 < x[last + 1]
    assert math.isclose(scene.pixel_size, 0.125)
