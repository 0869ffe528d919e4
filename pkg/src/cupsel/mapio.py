"""File formats for maps and masks.

Float maps use the FMAP1 container: the magic bytes ``FMAP1\\n``, one ASCII
header line ``width height channels\\n``, then width*height*channels
little-endian 32-bit IEEE-754 floats, row-major with the channel index
fastest.  A sidecar ``<stem>.meta.json`` records dims plus a ``kind`` of
``prob``, ``logit`` or ``uncertainty``.

Masks are 8-bit binary PGM (P5) with 0 = background and 255 = vessel.  Any
other nonzero byte is mapped to 1 on read, with a warning.

All writers are atomic: content goes to a temp file in the target directory
and is renamed into place, so a failure never leaves partial output.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from pathlib import Path

import numpy as np

FMAP_MAGIC = b"FMAP1\n"
MAP_KINDS = ("prob", "logit", "uncertainty")

MAP_SUFFIX = ".fmap"
META_SUFFIX = ".meta.json"


class FileFormatError(ValueError):
    """A map or mask file violates its on-disk format."""


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    """Write bytes via temp-then-rename; never leaves a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.parent / f".{path.name}.tmp-{os.getpid()}"
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.parent / (path.stem + META_SUFFIX)


def write_map(path: str | Path, arr: np.ndarray, kind: str) -> Path:
    """Write a float map as FMAP1 plus its sidecar descriptor.

    2-D input is stored as a single-channel map (the uncertainty case).
    """
    if kind not in MAP_KINDS:
        raise ValueError(f"kind must be one of {MAP_KINDS}, got {kind!r}")
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"map array must be 2-D or 3-D, got shape {arr.shape}")
    h, w, c = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    path = Path(path)
    atomic_write_bytes(path, FMAP_MAGIC + f"{w} {h} {c}\n".encode("ascii") + payload)
    meta = {"width": w, "height": h, "channels": c, "kind": kind}
    atomic_write_text(meta_path(path), json.dumps(meta) + "\n")
    return path


def read_map(path: str | Path) -> tuple[np.ndarray, str | None]:
    """Read an FMAP1 file; returns (float32 array (H, W, C), kind or None).

    The sidecar is optional on read; when present its dims must match the
    header.  Truncated or malformed files are rejected with the byte
    position of the problem.
    """
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(FMAP_MAGIC):
        raise FileFormatError(f"{path}: bad magic at byte 0, expected {FMAP_MAGIC!r}")
    nl = data.find(b"\n", len(FMAP_MAGIC))
    if nl < 0:
        raise FileFormatError(f"{path}: unterminated header at byte {len(FMAP_MAGIC)}")
    header = data[len(FMAP_MAGIC):nl]
    parts = header.split()
    try:
        w, h, c = (int(p) for p in parts)
    except (TypeError, ValueError):
        raise FileFormatError(
            f"{path}: malformed header {header!r} at byte {len(FMAP_MAGIC)} "
            f"(expected 'width height channels')"
        ) from None
    if w < 1 or h < 1 or c < 1:
        raise FileFormatError(f"{path}: non-positive dims {w}x{h}x{c} in header")
    expected = w * h * c * 4
    payload = data[nl + 1:]
    if len(payload) != expected:
        raise FileFormatError(
            f"{path}: pixel data at byte {nl + 1} has {len(payload)} bytes, "
            f"expected {expected} for {w}x{h}x{c} float32"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)

    kind = None
    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text())
        dims = (meta.get("width"), meta.get("height"), meta.get("channels"))
        if dims != (w, h, c):
            raise FileFormatError(
                f"{mp}: sidecar dims {dims} disagree with header {w}x{h}x{c}"
            )
        kind = meta.get("kind")
        if kind not in MAP_KINDS:
            raise FileFormatError(f"{mp}: unknown map kind {kind!r}")
    return arr.astype(np.float32), kind


def load_uncertainty(path: str | Path) -> np.ndarray:
    """Read a single-channel uncertainty map as float64 (H, W).

    Values are clamped to [0, ln 2]; float32 quantization on disk may sit a
    few 1e-8 above the bound, anything further is rejected.
    """
    arr, kind = read_map(path)
    if kind not in (None, "uncertainty"):
        raise FileFormatError(f"{path}: expected an uncertainty map, sidecar says {kind!r}")
    if arr.shape[2] != 1:
        raise FileFormatError(
            f"{path}: uncertainty maps are single-channel, got {arr.shape[2]} channels"
        )
    u = arr[:, :, 0].astype(np.float64)
    hi = math.log(2.0)
    if u.min() < -1e-6 or u.max() > hi + 1e-6:
        raise FileFormatError(
            f"{path}: uncertainty values outside [0, ln 2]: min={u.min()}, max={u.max()}"
        )
    return np.clip(u, 0.0, hi)


def _pgm_tokens(data: bytes, path: Path, count: int) -> tuple[list[bytes], int]:
    # Returns `count` header tokens and the offset just past the single
    # whitespace byte that terminates the last one.
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise FileFormatError(f"{path}: header ended early at byte {i}")
        b = data[i:i + 1]
        if b == b"#":
            nl = data.find(b"\n", i)
            i = len(data) if nl < 0 else nl + 1
        elif b.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
            if len(tokens) == count:
                # exactly one whitespace byte separates the header from pixels
                if i >= len(data) or not data[i:i + 1].isspace():
                    raise FileFormatError(f"{path}: missing separator after header at byte {i}")
                i += 1
    return tokens, i


def write_pgm(path: str | Path, img: np.ndarray) -> Path:
    """Write an 8-bit grayscale image as binary PGM (P5, maxval 255)."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"PGM images must be 2-D, got shape {img.shape}")
    if img.dtype != np.uint8:
        if img.min() < 0 or img.max() > 255:
            raise ValueError("image values must fit in 8 bits")
        img = img.astype(np.uint8)
    h, w = img.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    return atomic_write_bytes(path, header + np.ascontiguousarray(img).tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) into a uint8 (H, W) array."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] != b"P5":
        raise FileFormatError(f"{path}: bad magic at byte 0, expected b'P5'")
    tokens, offset = _pgm_tokens(data, path, 4)
    if tokens[0] != b"P5":
        raise FileFormatError(f"{path}: bad magic token {tokens[0]!r}, expected b'P5'")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise FileFormatError(f"{path}: malformed PGM header tokens {tokens[1:]}") from None
    if w < 1 or h < 1:
        raise FileFormatError(f"{path}: non-positive dims {w}x{h}")
    if not 0 < maxval <= 255:
        raise FileFormatError(f"{path}: unsupported maxval {maxval}, need 8-bit (1..255)")
    expected = w * h
    payload = data[offset:]
    if len(payload) != expected:
        raise FileFormatError(
            f"{path}: pixel data at byte {offset} has {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def write_mask(path: str | Path, mask: np.ndarray) -> Path:
    """Write a {0,1} binary mask as PGM with vessel pixels at 255."""
    mask = np.asarray(mask)
    if mask.ndim != 2 or (mask.size and not np.isin(mask, (0, 1)).all()):
        raise ValueError("mask must be 2-D with values in {0, 1}")
    return write_pgm(path, mask.astype(np.uint8) * 255)


def read_mask(path: str | Path) -> np.ndarray:
    """Read a mask PGM; any nonzero byte maps to 1 (warns if not 0/255)."""
    img = read_pgm(path)
    odd = np.count_nonzero(~np.isin(img, (0, 255)))
    if odd:
        warnings.warn(
            f"{path}: {odd} pixels with values outside {{0, 255}} mapped to 1",
            stacklevel=2,
        )
    return (img != 0).astype(np.uint8)
