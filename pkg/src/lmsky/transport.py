"""Diffuse probe scene (unit sphere on a ground plane) and its light transport.

The camera is orthographic and looks straight down (-y). Image row ``r`` maps
to world ``x`` and column ``c`` to world ``z``, both increasing, so a sun at
azimuth pi (the centre column of an equirectangular map) casts its shadow
toward the bottom of the image.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .envmap import EnvMap
from .errors import CacheFormatError, GeometryMismatchError, InvalidInputError
from .geometry import direction_grid, solid_angle_rows

log = logging.getLogger(__name__)

CACHE_MAGIC = b"LMSKYTM\x00"
CACHE_VERSION = 1
_HEADER = struct.Struct("<8sI6I32s")


@dataclass(frozen=True)
class ProbeScene:
    sphere_radius: float = 1.0
    sphere_albedo: float = 1.0
    plane_albedo: float = 1.0
    half_extent: float = 4.0
    render_size: int = 64

    def __post_init__(self):
        if self.half_extent < 2 * self.sphere_radius:
            raise InvalidInputError("camera must frame at least 4 sphere radii of plane")
        if self.render_size < 1:
            raise InvalidInputError("render_size must be positive")

    @property
    def sphere_center(self) -> np.ndarray:
        return np.array([0.0, self.sphere_radius, 0.0])

    @property
    def pixel_size(self) -> float:
        return 2.0 * self.half_extent / self.render_size

    def pixel_xz(self) -> tuple[np.ndarray, np.ndarray]:
        """World x (per row) and z (per column) of pixel centres."""
        n = self.render_size
        c = -self.half_extent + (np.arange(n) + 0.5) * self.pixel_size
        return c, c.copy()

    def footprint_last_row(self) -> int:
        """Last image row covered by the sphere's silhouette."""
        x, _ = self.pixel_xz()
        return int(np.nonzero(x <= self.sphere_radius)[0].max())

    def digest(self) -> bytes:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()


@dataclass(frozen=True, eq=False)
class TransportMatrix:
    """Dense (pixels x texels) float32 matrix; env texels in row-major order."""

    matrix: np.ndarray
    env_height: int
    render_size: int
    scene_hash: bytes = b"\x00" * 32

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if m.shape != (self.render_size ** 2, 2 * self.env_height ** 2):
            raise InvalidInputError(f"transport shape {m.shape} inconsistent with geometry")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_upper64", None)

    @property
    def env_width(self) -> int:
        return 2 * self.env_height

    @property
    def n_upper(self) -> int:
        """Upper-hemisphere texels are the first env_height/2 rows."""
        return (self.env_height // 2) * self.env_width

    def upper64(self) -> np.ndarray:
        """float64 copy of the upper-hemisphere columns, for optimisation."""
        if self._upper64 is None:
            object.__setattr__(self, "_upper64", self.matrix[:, : self.n_upper].astype(np.float64))
        return self._upper64

    def check_env(self, env_shape) -> None:
        if tuple(env_shape[:2]) != (self.env_height, self.env_width):
            raise GeometryMismatchError(
                f"envmap {env_shape[:2]} does not match transport {(self.env_height, self.env_width)}"
            )


def _surface_points(scene: ProbeScene):
    """Primary hits of the top-down camera: positions, normals, albedo per pixel."""
    x, z = scene.pixel_xz()
    xx, zz = np.meshgrid(x, z, indexing="ij")
    r = scene.sphere_radius
    rho2 = xx ** 2 + zz ** 2
    on_sphere = rho2 < r * r
    y = np.where(on_sphere, r + np.sqrt(np.maximum(r * r - rho2, 0.0)), 0.0)
    pts = np.stack([xx, y, zz], axis=-1).reshape(-1, 3)
    normals = np.zeros_like(pts)
    normals[:, 1] = 1.0
    sph = on_sphere.reshape(-1)
    normals[sph] = (pts[sph] - scene.sphere_center) / r
    albedo = np.where(sph, scene.sphere_albedo, scene.plane_albedo)
    return pts, normals, albedo


def _occluded(origins: np.ndarray, dirs: np.ndarray, scene: ProbeScene) -> np.ndarray:
    """Ray-sphere and ray-plane occlusion for every (origin, direction) pair."""
    oc = origins[:, None, :] - scene.sphere_center  # (P, 1, 3)
    b = np.einsum("pik,jk->pj", oc, dirs)
    cc = np.sum(oc * oc, axis=-1) - scene.sphere_radius ** 2
    disc = b * b - cc
    t_near = -b - np.sqrt(np.maximum(disc, 0.0))
    hit_sphere = (disc > 0) & (t_near > 0)
    # Plane y = 0: hit when heading down from above it.
    hit_plane = (dirs[None, :, 1] < 0) & (origins[:, None, 1] > 0)
    return hit_sphere | hit_plane


def build_transport(scene: ProbeScene = ProbeScene(), env_height: int = 64,
                    chunk: int = 128) -> TransportMatrix:
    if env_height < 8 or env_height % 2:
        raise InvalidInputError("env_height must be even and >= 8")
    width = 2 * env_height
    n_up = (env_height // 2) * width
    dirs = direction_grid(env_height)[: env_height // 2].reshape(-1, 3)
    domega = np.repeat(solid_angle_rows(env_height)[: env_height // 2], width)
    pts, normals, albedo = _surface_points(scene)
    n_pix = pts.shape[0]
    mat = np.zeros((n_pix, env_height * width), dtype=np.float32)
    for start in range(0, n_pix, chunk):
        sl = slice(start, min(start + chunk, n_pix))
        cosine = np.maximum(normals[sl] @ dirs.T, 0.0)
        origins = pts[sl] + 1e-9 * normals[sl]
        vis = ~_occluded(origins, dirs, scene)
        block = (albedo[sl, None] / math.pi) * cosine * vis * domega[None, :]
        mat[sl, :n_up] = block
    return TransportMatrix(mat, env_height, scene.render_size, scene.digest())


def render_probe(T: TransportMatrix, env) -> np.ndarray:
    """Probe render (render_size, render_size, 3); linear in the environment."""
    data = env.data if isinstance(env, EnvMap) else np.asarray(env)
    T.check_env(data.shape)
    flat = data.reshape(-1, 3).astype(np.float64)
    img = T.upper64() @ flat[: T.n_upper]
    return img.reshape(T.render_size, T.render_size, 3)


def render_probe_oracle(scene: ProbeScene, env) -> np.ndarray:
    """Per-pixel brute-force integration; shares no visibility code with build_transport."""
    data = np.asarray(env.data if isinstance(env, EnvMap) else env, dtype=np.float64)
    h, w = data.shape[:2]
    n = scene.render_size
    r = scene.sphere_radius
    center = np.array([0.0, r, 0.0])
    out = np.zeros((n, n, 3))
    thetas = [math.pi * (v + 0.5) / h for v in range(h // 2)]
    texels = []
    for v, th in enumerate(thetas):
        dw = (2 * math.pi / w) * (math.pi / h) * math.sin(th)
        for u in range(w):
            ph = 2 * math.pi * (u + 0.5) / w
            d = np.array([math.sin(th) * math.cos(ph), math.cos(th), math.sin(th) * math.sin(ph)])
            texels.append((d, dw, data[v, u]))
    dirs = np.array([t[0] for t in texels])
    dws = np.array([t[1] for t in texels])
    rad = np.array([t[2] for t in texels])
    size = scene.pixel_size
    for i in range(n):
        for j in range(n):
            origin = np.array([-scene.half_extent + (i + 0.5) * size, 100.0, -scene.half_extent + (j + 0.5) * size])
            ray = np.array([0.0, -1.0, 0.0])
            # generic quadratic for the camera ray against the sphere
            oc = origin - center
            qb = 2 * ray @ oc
            qc = oc @ oc - r * r
            disc = qb * qb - 4 * qc
            if disc > 0 and (-qb - math.sqrt(disc)) / 2 > 0:
                t = (-qb - math.sqrt(disc)) / 2
                p = origin + t * ray
                nrm = (p - center) / r
                albedo = scene.sphere_albedo
                # plane blocks only downward directions; the sphere is convex
                visible = dirs[:, 1] >= 0
            else:
                t = origin[1] / -ray[1]
                p = origin + t * ray
                nrm = np.array([0.0, 1.0, 0.0])
                albedo = scene.plane_albedo
                to_c = center - p
                dist = np.linalg.norm(to_c)
                half_angle = math.asin(min(r / dist, 1.0))
                ang = np.arccos(np.clip(dirs @ (to_c / dist), -1.0, 1.0))
                visible = ang >= half_angle
            cosine = np.clip(dirs @ nrm, 0.0, None)
            wgt = albedo / math.pi * cosine * visible * dws
            out[i, j] = wgt @ rad
    return out


def _cache_name(scene: ProbeScene, env_height: int) -> str:
    return f"transport_{scene.digest().hex()[:16]}_{env_height}.bin"


def save_transport(path, T: TransportMatrix) -> None:
    n_pix, n_tex = T.matrix.shape
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, n_pix, n_tex, T.env_width,
                          T.env_height, T.render_size, T.render_size, T.scene_hash)
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(T.matrix.astype("<f4").tobytes())
    os.replace(tmp, path)


def load_transport(path) -> TransportMatrix:
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise CacheFormatError("transport cache header truncated")
        magic, version, n_pix, n_tex, ew, eh, rw, rh, digest = _HEADER.unpack(raw)
        if magic != CACHE_MAGIC:
            raise CacheFormatError("bad transport cache magic")
        if version != CACHE_VERSION:
            raise CacheFormatError(f"transport cache version {version} != {CACHE_VERSION}")
        payload = f.read()
    if len(payload) != n_pix * n_tex * 4 or ew != 2 * eh or rw != rh:
        raise CacheFormatError("transport cache payload inconsistent with header")
    mat = np.frombuffer(payload, dtype="<f4").reshape(n_pix, n_tex)
    return TransportMatrix(mat, eh, rw, digest)


def default_cache_dir() -> Path:
    root = os.environ.get("LMSKY_CACHE_DIR") or os.path.join(
        os.environ.get("XDG_CACHE_HOME", os.path.expanduser("~/.cache")), "lmsky")
    return Path(root)


def get_transport(scene: ProbeScene = ProbeScene(), env_height: int = 64,
                  cache_dir: Optional[os.PathLike] = None) -> TransportMatrix:
    """Load a cached transport matrix, rebuilding it if missing or stale."""
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    path = cache_dir / _cache_name(scene, env_height)
    if path.exists():
        try:
            T = load_transport(path)
            if T.scene_hash == scene.digest() and T.env_height == env_height:
                return T
            log.warning("transport cache %s is for a different scene; rebuilding", path)
        except CacheFormatError as exc:
            log.warning("transport cache %s unusable (%s); rebuilding", path, exc)
    T = build_transport(scene, env_height)
    try:
        cache_dir.mkdir(parents=True, exist_ok=True)
        save_transport(path, T)
    except OSError as exc:
        log.warning("could not write transport cache %s: %s", path, exc)
    return T
