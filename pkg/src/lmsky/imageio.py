"""PFM (HDR) and PNG (LDR) file I/O."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image

from .envmap import EnvMap, LdrImage
from .errors import ImageFormatError, InvalidInputError, TruncatedFileError, UnsupportedFormatError


def _read_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise TruncatedFileError("unexpected end of file in PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c
        if len(tok) > 64:
            raise ImageFormatError("PFM header token too long")


def read_pfm_array(path) -> np.ndarray:
    """Raw PFM payload as float32 (H, W, C), top row first."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ImageFormatError(f"bad PFM magic {magic!r}")
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
            scale = float(_read_token(f))
        except ValueError as exc:
            raise ImageFormatError(f"malformed PFM header: {exc}") from exc
        if width <= 0 or height <= 0 or scale == 0:
            raise ImageFormatError("PFM dimensions and scale must be non-zero")
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        payload = f.read(count * 4)
    if len(payload) < count * 4:
        raise TruncatedFileError(f"PFM payload has {len(payload)} bytes, expected {count * 4}")
    data = np.frombuffer(payload, dtype=dtype, count=count).astype(np.float32)
    # PFM stores rows bottom-to-top.
    return data.reshape(height, width, channels)[::-1]


def write_pfm_array(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data[..., None]
    if data.shape[2] not in (1, 3):
        raise InvalidInputError("PFM supports 1 or 3 channels")
    h, w, c = data.shape
    header = f"{'PF' if c == 3 else 'Pf'}\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.ascontiguousarray(data[::-1]).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(body)


def read_envmap(path) -> EnvMap:
    data = read_pfm_array(path)
    if data.shape[2] == 1:
        data = np.repeat(data, 3, axis=2)
    return EnvMap(data)


def write_envmap(path, env: EnvMap) -> None:
    write_pfm_array(path, env.data)


def read_png(path) -> LdrImage:
    try:
        with Image.open(path) as im:
            im.load()
            rgb = im.convert("RGB")
    except OSError as exc:
        raise ImageFormatError(f"cannot decode PNG {path}: {exc}") from exc
    return LdrImage(np.asarray(rgb, dtype=np.uint8))


def write_png(path, image: LdrImage) -> None:
    # Pillow writes no timestamps, so output is byte-reproducible.
    Image.fromarray(np.ascontiguousarray(image.data)).save(path, format="PNG")


def read_image(path):
    ext = Path(path).suffix.lower()
    if ext == ".pfm":
        return read_envmap(path)
    if ext == ".png":
        return read_png(path)
    raise UnsupportedFormatError(f"unsupported image format {ext!r}")


def write_image(path, image) -> None:
    ext = Path(path).suffix.lower()
    if ext == ".pfm":
        if isinstance(image, LdrImage):
            raise UnsupportedFormatError("PFM output needs an HDR image")
        write_pfm_array(path, image.data if isinstance(image, EnvMap) else image)
    elif ext == ".png":
        if not isinstance(image, LdrImage):
            raise UnsupportedFormatError("PNG output needs an 8-bit image")
        write_png(path, image)
    else:
        raise UnsupportedFormatError(f"unsupported image format {ext!r}")
    return os.fspath(path)
