"""Image preparation: grayscale, equalization, crop, box downsampling and
patch normalization.

Raw images are plain ``uint8`` numpy arrays shaped ``(height, width)`` or
``(height, width, 3)``. Processed images are ``float64`` arrays shaped
``(match_height, match_width)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image

SIGMA_EPS = 1e-6
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

Rect = Tuple[int, int, int, int]


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def _check_raw(img):
    img = np.asarray(img)
    if img.ndim not in (2, 3) or img.size == 0:
        raise ValueError(f"malformed image with shape {img.shape}")
    return img


@dataclass(frozen=True)
class PreprocessConfig:
    match_width: int = 48
    match_height: int = 24
    patch_radius: int = 4
    crop_rect: Optional[Rect] = None

    def __post_init__(self):
        if self.match_width < 2 or self.match_height < 2:
            raise ValueError("matching resolution must be at least 2x2")
        if self.patch_radius < 1:
            raise ValueError("patch_radius must be >= 1")
        if self.crop_rect is not None:
            left, top, w, h = self.crop_rect
            if left < 0 or top < 0 or w < 1 or h < 1:
                raise ValueError(f"invalid crop_rect {self.crop_rect}")

    @classmethod
    def from_mapping(cls, values) -> "PreprocessConfig":
        """Build a config from parsed ``key=value`` pairs (unknown keys ignored)."""
        kw = {}
        for key in ("match_width", "match_height", "patch_radius"):
            if key in values:
                kw[key] = int(values[key])
        crop_keys = ("crop_left", "crop_top", "crop_width", "crop_height")
        present = [k in values for k in crop_keys]
        if any(present):
            if not all(present):
                raise ValueError("crop needs all of " + ", ".join(crop_keys))
            kw["crop_rect"] = tuple(int(values[k]) for k in crop_keys)
        return cls(**kw)

    def to_mapping(self) -> dict:
        out = {
            "match_width": self.match_width,
            "match_height": self.match_height,
            "patch_radius": self.patch_radius,
        }
        if self.crop_rect is not None:
            for key, v in zip(("crop_left", "crop_top", "crop_width", "crop_height"), self.crop_rect):
                out[key] = v
        return out


def to_grayscale(img: np.ndarray) -> np.ndarray:
    img = _check_raw(img)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    if img.shape[2] != 3:
        raise ValueError(f"unsupported channel count {img.shape[2]}")
    rgb = img.astype(np.float64)
    gray = rgb[..., 0] * LUMA_WEIGHTS[0] + rgb[..., 1] * LUMA_WEIGHTS[1] + rgb[..., 2] * LUMA_WEIGHTS[2]
    return np.clip(_round_half_up(gray), 0, 255).astype(np.uint8)


def equalize_histogram(img: np.ndarray) -> np.ndarray:
    """CDF-based histogram equalization of an 8-bit grayscale image.

    Constant images are returned unchanged since the usual mapping is 0/0 there.
    """
    img = _check_raw(img)
    if img.ndim != 2:
        raise ValueError("equalize_histogram expects a single-channel image")
    hist = np.bincount(img.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    n = img.size
    cdf_min = cdf[cdf > 0][0]
    if n == cdf_min:
        return img.copy()
    lut = _round_half_up((cdf - cdf_min) / (n - cdf_min) * 255.0)
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return lut[img]


def crop(img: np.ndarray, rect: Rect) -> np.ndarray:
    img = _check_raw(img)
    left, top, w, h = (int(v) for v in rect)
    height, width = img.shape[:2]
    if left < 0 or top < 0 or w < 1 or h < 1 or left + w > width or top + h > height:
        raise ValueError(f"crop rect {rect} outside {width}x{height} image")
    return img[top:top + h, left:left + w].copy()


def _area_weights(n_src: int, n_dst: int) -> np.ndarray:
    # Row i holds the fraction of source pixel j covered by destination pixel i,
    # normalized so the row sums to one.
    scale = n_src / n_dst
    edges = np.arange(n_dst + 1) * scale
    lo = edges[:-1, None]
    hi = edges[1:, None]
    src_lo = np.arange(n_src)[None, :]
    overlap = np.clip(np.minimum(hi, src_lo + 1) - np.maximum(lo, src_lo), 0.0, None)
    return overlap / scale


def downsample(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Area-average a grayscale image onto a ``width`` x ``height`` grid."""
    img = _check_raw(img)
    if img.ndim != 2:
        raise ValueError("downsample expects a single-channel image")
    src_h, src_w = img.shape
    if width > src_w or height > src_h or width < 1 or height < 1:
        raise ValueError(f"cannot downsample {src_w}x{src_h} to {width}x{height}")
    if (width, height) == (src_w, src_h):
        return img.copy()
    wx = _area_weights(src_w, width)
    wy = _area_weights(src_h, height)
    out = wy @ img.astype(np.float64) @ wx.T
    return np.clip(_round_half_up(out), 0, 255).astype(np.uint8)


def patch_normalize(img: np.ndarray, radius: int) -> np.ndarray:
    """Subtract the local mean and divide by the local population std.

    The window is the square of side ``2*radius + 1`` centred on each pixel,
    clipped at the image border. Pixels whose window std is below
    ``SIGMA_EPS`` are set to exactly 0. Accepts integer or real input.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"patch_normalize expects a 2-D image, got shape {arr.shape}")
    if radius < 1:
        raise ValueError("radius must be >= 1")
    h, w = arr.shape
    r = int(radius)
    padded = np.zeros((h + 2 * r, w + 2 * r))
    padded[r:r + h, r:r + w] = arr
    mask = np.zeros_like(padded)
    mask[r:r + h, r:r + w] = 1.0

    offsets = [(dy, dx) for dy in range(2 * r + 1) for dx in range(2 * r + 1)]
    total = np.zeros((h, w))
    count = np.zeros((h, w))
    for dy, dx in offsets:
        total += padded[dy:dy + h, dx:dx + w]
        count += mask[dy:dy + h, dx:dx + w]
    mean = total / count

    # second pass around the per-pixel mean avoids E[x^2] - E[x]^2 cancellation
    sq = np.zeros((h, w))
    for dy, dx in offsets:
        d = padded[dy:dy + h, dx:dx + w] - mean
        sq += d * d * mask[dy:dy + h, dx:dx + w]
    sigma = np.sqrt(sq / count)

    out = np.zeros((h, w))
    ok = sigma >= SIGMA_EPS
    out[ok] = (arr[ok] - mean[ok]) / sigma[ok]
    return out


def preprocess(raw: np.ndarray, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Full pipeline: grayscale, equalize, crop, downsample, patch-normalize."""
    img = equalize_histogram(to_grayscale(raw))
    if cfg.crop_rect is not None:
        img = crop(img, cfg.crop_rect)
    img = downsample(img, cfg.match_width, cfg.match_height)
    return patch_normalize(img, cfg.patch_radius)


def shift_columns(img: np.ndarray, s: int) -> np.ndarray:
    """Circularly shift image columns right by ``s`` (a pure heading rotation)."""
    return np.roll(img, int(s), axis=1)


def read_image(path) -> np.ndarray:
    """Read a PNG or binary PGM/PPM file into a uint8 array."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "RGB"):
                arr = np.asarray(im)
            elif im.mode in ("RGBA", "P", "LA", "1"):
                arr = np.asarray(im.convert("RGB" if im.mode != "LA" else "L"))
            else:
                raise ValueError(f"unsupported image mode {im.mode} in {path}")
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"unreadable image {path}: {exc}") from exc
    return np.array(arr, dtype=np.uint8)


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    img = np.asarray(img, dtype=np.uint8)
    # explicit format so .pgm/.ppm/.png all round-trip without metadata chunks
    fmt = "PNG" if path.suffix.lower() == ".png" else "PPM"
    Image.fromarray(img).save(path, format=fmt)
