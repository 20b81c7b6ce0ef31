"""8-bit PNG (via Pillow) and binary PPM (P6) image codecs.

Pixels map to [0, 1] by division by 255; saving inverts with round-half-up.
"""

from __future__ import annotations

import io
import os
import re

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..exceptions import DecodeError, DimensionError

_PPM_HEADER = re.compile(rb"P6\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def to_uint8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64) / 255.0


def decode_ppm(data: bytes) -> np.ndarray:
    m = _PPM_HEADER.match(data)
    if m is None:
        raise DecodeError("not a binary PPM (P6) file")
    w, h, maxval = (int(g) for g in m.groups())
    if w <= 0 or h <= 0:
        raise DecodeError(f"invalid PPM size {w}x{h}")
    if maxval != 255:
        raise DecodeError(f"only 8-bit PPM is supported, got maxval {maxval}")
    body = data[m.end() :]
    need = w * h * 3
    if len(body) < need:
        raise DecodeError(f"truncated PPM: expected {need} pixel bytes, got {len(body)}")
    return np.frombuffer(body[:need], dtype=np.uint8).reshape(h, w, 3).copy()


def encode_ppm(arr: np.ndarray) -> bytes:
    h, w = arr.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(arr, dtype=np.uint8).tobytes()


def _decode_png(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode not in ("RGB", "RGBA", "L", "P", "LA"):
                raise DecodeError(f"unsupported PNG mode {im.mode}")
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode PNG: {exc}") from exc


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG or P6 bytes to an (H, W, 3) float image in [0, 1]."""
    if data[:2] == b"P6":
        return from_uint8(decode_ppm(data))
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return from_uint8(_decode_png(data))
    raise DecodeError("unrecognised image format (expected PNG or P6 PPM)")


def load_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return decode_image(data)
    except DecodeError as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def save_image(path, img: np.ndarray) -> None:
    """Write an (H, W, 3) image; the format follows the extension (.ppm or .png)."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"expected (H, W, 3) image, got {img.shape}")
    arr = to_uint8(img)
    if os.fspath(path).lower().endswith(".ppm"):
        with open(path, "wb") as fh:
            fh.write(encode_ppm(arr))
    else:
        Image.fromarray(arr, "RGB").save(path, format="PNG")


def save_gray(path, values: np.ndarray) -> None:
    """Write a single-channel [0, 1] map as an 8-bit grayscale PNG."""
    values = np.asarray(values)
    if values.ndim == 3:
        values = values[:, :, 0]
    Image.fromarray(to_uint8(values), "L").save(path, format="PNG")


IMAGE_EXTENSIONS = (".png", ".ppm")


def list_images(directory) -> list[str]:
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(IMAGE_EXTENSIONS))
    return [os.path.join(directory, n) for n in names]
