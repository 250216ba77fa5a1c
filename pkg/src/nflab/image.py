"""Procedural images, netpbm I/O, block resampling, and SSIM.

Images are float grids in [0,1], shape (height, width, channels) with 1 or 3
channels.  File I/O speaks plain and binary PGM/PPM (P2/P3/P5/P6) at maxval
255 or 65535; 16-bit rasters are big-endian per the netpbm convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import RngState

SYNTH_KINDS = ("bands", "checker", "blobs")


class ImageParseError(ValueError):
    """Malformed netpbm input; message includes the failing byte offset."""


@dataclass
class ImageGrid:
    width: int
    height: int
    channels: int
    pixels: np.ndarray  # (height, width, channels), float64 in [0,1]


def make_grid(pixels: np.ndarray) -> ImageGrid:
    """Wrap an array as an ImageGrid, clamping values into [0,1]."""
    px = np.asarray(pixels, dtype=np.float64)
    if px.ndim == 2:
        px = px[:, :, None]
    if px.ndim != 3 or px.shape[2] not in (1, 3):
        raise ValueError(f"expected (h, w) or (h, w, 1|3), got {px.shape}")
    px = np.clip(px, 0.0, 1.0)
    h, w, c = px.shape
    return ImageGrid(width=w, height=h, channels=c, pixels=px)


def _normalize01(a: np.ndarray) -> np.ndarray:
    lo, hi = float(a.min()), float(a.max())
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def synth_image(kind: str, size: int, rng: RngState) -> ImageGrid:
    """Deterministic procedural test image.

    bands: per-channel sum of 16 random 2D sinusoids with integer frequency
    pairs up to 8 cycles across the frame, rescaled to full [0,1] range.
    checker: grayscale 0/1 squares, size//4 blocks per side (2x2 blocks on
    an 8x8 frame).  blobs: RGB sum of 12 Gaussian bumps.
    """
    if size < 8:
        raise ValueError("size must be at least 8")
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synth kind {kind!r}")
    yy, xx = np.meshgrid(np.arange(size) / size, np.arange(size) / size, indexing="ij")

    if kind == "checker":
        block = size // 4
        pattern = ((np.arange(size)[:, None] // block + np.arange(size)[None, :] // block) % 2)
        return make_grid(pattern.astype(np.float64))

    if kind == "bands":
        chans = []
        for c in range(3):
            crng = rng.derive(("bands", c))
            fx = np.floor(crng.uniform((16,), 0.0, 8.0)) + 1.0
            fy = np.floor(crng.uniform((16,), 0.0, 8.0)) + 1.0
            amp = crng.uniform((16,), 0.3, 1.0)
            phase = crng.uniform((16,), 0.0, 2.0 * np.pi)
            acc = np.zeros((size, size))
            for k in range(16):
                acc += amp[k] * np.sin(2 * np.pi * (fx[k] * xx + fy[k] * yy) + phase[k])
            chans.append(_normalize01(acc))
        return make_grid(np.stack(chans, axis=2))

    # blobs
    chans = []
    for c in range(3):
        crng = rng.derive(("blobs", c))
        cx = crng.uniform((12,), 0.1, 0.9)
        cy = crng.uniform((12,), 0.1, 0.9)
        sg = crng.uniform((12,), 0.03, 0.15)
        amp = crng.uniform((12,), 0.4, 1.0)
        acc = np.zeros((size, size))
        for k in range(12):
            acc += amp[k] * np.exp(-((xx - cx[k]) ** 2 + (yy - cy[k]) ** 2) / (2 * sg[k] ** 2))
        chans.append(_normalize01(acc))
    return make_grid(np.stack(chans, axis=2))


# ---------------------------------------------------------------------------
# netpbm I/O


def save_image(path, img: ImageGrid, binary: bool = True, maxval: int = 255) -> None:
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    if img.channels == 1:
        magic = "P5" if binary else "P2"
    else:
        magic = "P6" if binary else "P3"
    q = np.rint(img.pixels * maxval).astype(np.uint32)
    q = np.minimum(q, maxval)
    header = f"{magic}\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            if maxval == 255:
                fh.write(q.astype(np.uint8).tobytes())
            else:
                fh.write(q.astype(">u2").tobytes())
        else:
            flat = q.reshape(-1)
            lines = []
            for i in range(0, flat.size, 12):
                lines.append(" ".join(str(int(v)) for v in flat[i : i + 12]))
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


def _next_token(buf: bytes, pos: int):
    """Scan the next whitespace-delimited token, skipping '#' comments."""
    n = len(buf)
    while pos < n:
        ch = buf[pos : pos + 1]
        if ch == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise ImageParseError(f"unexpected end of header at byte {pos}")
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def _int_token(buf: bytes, pos: int, what: str):
    tok, end = _next_token(buf, pos)
    try:
        return int(tok.decode("ascii")), end
    except (UnicodeDecodeError, ValueError):
        raise ImageParseError(f"bad {what} token {tok!r} at byte {pos}") from None


def load_image(path) -> ImageGrid:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, pos = _next_token(buf, 0)
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ImageParseError(f"unsupported magic {magic!r} at byte 0")
    channels = 3 if magic in (b"P3", b"P6") else 1
    width, pos = _int_token(buf, pos, "width")
    height, pos = _int_token(buf, pos, "height")
    maxval, pos = _int_token(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise ImageParseError(f"bad dimensions {width}x{height} at byte {pos}")
    if maxval not in (255, 65535):
        raise ImageParseError(f"unsupported maxval {maxval} at byte {pos}")
    count = width * height * channels

    if magic in (b"P2", b"P3"):
        vals = np.empty(count, dtype=np.float64)
        for i in range(count):
            v, pos = _int_token(buf, pos, "pixel")
            if not 0 <= v <= maxval:
                raise ImageParseError(f"pixel {v} out of range at byte {pos}")
            vals[i] = v
    else:
        pos += 1  # exactly one whitespace byte separates maxval from raster
        bytes_per = 1 if maxval == 255 else 2
        need = count * bytes_per
        raster = buf[pos : pos + need]
        if len(raster) < need:
            raise ImageParseError(
                f"truncated raster: need {need} bytes, have {len(raster)} at byte {pos}"
            )
        dt = np.uint8 if maxval == 255 else np.dtype(">u2")
        vals = np.frombuffer(raster, dtype=dt).astype(np.float64)
    px = (vals / maxval).reshape(height, width, channels)
    return ImageGrid(width=width, height=height, channels=channels, pixels=px)


# ---------------------------------------------------------------------------
# resampling


def downsample4x(img: ImageGrid) -> ImageGrid:
    """Linear measurement operator: each output pixel is its 4x4 block mean."""
    if img.width % 4 or img.height % 4:
        raise ValueError(f"dimensions {img.width}x{img.height} not divisible by 4")
    h, w = img.height // 4, img.width // 4
    px = img.pixels.reshape(h, 4, w, 4, img.channels).mean(axis=(1, 3))
    return ImageGrid(width=w, height=h, channels=img.channels, pixels=px)


def upsample4x_nearest(img: ImageGrid) -> ImageGrid:
    px = np.repeat(np.repeat(img.pixels, 4, axis=0), 4, axis=1)
    return ImageGrid(width=img.width * 4, height=img.height * 4, channels=img.channels, pixels=px)


def downsample4x_matrix_free(pixels: np.ndarray) -> np.ndarray:
    """downsample4x on a raw (h, w, c) array; used inside training losses."""
    h, w, c = pixels.shape
    return pixels.reshape(h // 4, 4, w // 4, 4, c).mean(axis=(1, 3))


# ---------------------------------------------------------------------------
# SSIM


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    t = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable correlation with window g, 'valid' region only."""
    k = g.size
    rows = sliding_window_view(a, k, axis=0) @ g     # (h-k+1, w)
    return sliding_window_view(rows, k, axis=1) @ g  # (h-k+1, w-k+1)


def ssim(a: ImageGrid, b: ImageGrid, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over 11x11 Gaussian windows (sigma 1.5),
    dynamic range 1, averaged across channels."""
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise ValueError("shape mismatch")
    if a.width < 11 or a.height < 11:
        raise ValueError("images must be at least 11x11")
    g = _gaussian_window()
    c1 = k1 * k1
    c2 = k2 * k2
    scores = []
    for c in range(a.channels):
        x = a.pixels[:, :, c]
        y = b.pixels[:, :, c]
        mx = _filter_valid(x, g)
        my = _filter_valid(y, g)
        mxx = _filter_valid(x * x, g)
        myy = _filter_valid(y * y, g)
        mxy = _filter_valid(x * y, g)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        num = (2 * mx * my + c1) * (2 * cov + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))
