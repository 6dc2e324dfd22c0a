"""Image decoding and the preprocessing shared by every measure.

Rasters are stored as read-only numpy arrays indexed ``[y, x]`` (row-major),
so they can be shared freely between threads.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionError

SUPPORTED_FORMATS = ("PNG", "JPEG")
DEFAULT_EDGE_THRESHOLD = 80.0
DEFAULT_MAX_DIM = 1024

# Integer grayscale weights (percent): 0.3 R + 0.59 G + 0.11 B.
_GRAY_WEIGHTS = (30, 59, 11)


class RgbPixel(NamedTuple):
    r: int
    g: int
    b: int

    @classmethod
    def checked(cls, r: int, g: int, b: int) -> "RgbPixel":
        for name, v in zip("rgb", (r, g, b)):
            if not 0 <= int(v) <= 255 or int(v) != v:
                raise ValueError(f"channel {name}={v!r} outside [0, 255]")
        return cls(int(r), int(g), int(b))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RgbRaster:
    """An X×Y grid of 8-bit RGB pixels, shape ``(height, width, 3)``."""

    pixels: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(f"expected (height, width, 3) pixels, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"raster must be at least 1x1, got {arr.shape[1]}x{arr.shape[0]}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255 or not np.all(np.equal(np.mod(arr, 1), 0))):
                raise ValueError("pixel channels must be integers in [0, 255]")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        object.__setattr__(self, "pixels", _frozen(arr))

    @classmethod
    def from_pixels(cls, pixels, width: int, height: int, source_id: str = "") -> "RgbRaster":
        """Build from a flat row-major sequence of ``(r, g, b)`` triples."""
        if width < 1 or height < 1:
            raise DimensionError(f"raster must be at least 1x1, got {width}x{height}")
        flat = [RgbPixel.checked(*p) for p in pixels]
        if len(flat) != width * height:
            raise DimensionError(f"{len(flat)} pixels supplied for a {width}x{height} raster")
        arr = np.array(flat, dtype=np.uint8).reshape(height, width, 3)
        return cls(arr, source_id)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def pixel(self, x: int, y: int) -> RgbPixel:
        r, g, b = (int(c) for c in self.pixels[y, x])
        return RgbPixel(r, g, b)

    def mirrored(self) -> "RgbRaster":
        """Horizontal mirror image (left and right swapped)."""
        return RgbRaster(self.pixels[:, ::-1], self.source_id)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RgbRaster):
            return NotImplemented
        return self.source_id == other.source_id and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"RgbRaster({self.width}x{self.height}, source_id={self.source_id!r})"


@dataclass(frozen=True, eq=False)
class GrayRaster:
    """Real-valued grayscale grid, shape ``(height, width)``, values in [0, 255]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"expected a non-empty 2-D grid, got shape {arr.shape}")
        if not (arr.min() >= 0.0 and arr.max() <= 255.0):
            raise ValueError("grayscale values must lie in [0, 255]")
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class EdgeMap:
    """Binary edge flags, shape ``(height, width)``, dtype uint8."""

    flags: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.flags)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"expected a non-empty 2-D grid, got shape {arr.shape}")
        if arr.dtype != np.uint8 or arr.max(initial=0) > 1:
            if not np.isin(arr, (0, 1)).all():
                raise ValueError("edge flags must be 0 or 1")
        arr = arr.astype(np.uint8, copy=True)
        object.__setattr__(self, "flags", _frozen(arr))

    @property
    def width(self) -> int:
        return self.flags.shape[1]

    @property
    def height(self) -> int:
        return self.flags.shape[0]


def decode_image(data: bytes, source_id: str = "") -> RgbRaster:
    """Decode PNG or JPEG bytes into an :class:`RgbRaster`.

    Transparent pixels are composited over white.
    """
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.format not in SUPPORTED_FORMATS:
                raise DecodeError(f"unsupported image format {im.format!r}; expected PNG or JPEG")
            im.load()
            if im.width == 0 or im.height == 0:
                raise DimensionError("image has zero pixels")
            has_alpha = im.mode in ("RGBA", "LA", "PA", "RGBa", "La") or (
                im.mode == "P" and "transparency" in im.info
            )
            if has_alpha:
                rgba = np.asarray(im.convert("RGBA"), dtype=np.uint16)
                pixels = _over_white(rgba)
            else:
                pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (DecodeError, DimensionError):
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError, EOFError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from exc
    return RgbRaster(pixels, source_id)


def _over_white(rgba: np.ndarray) -> np.ndarray:
    rgb, a = rgba[..., :3], rgba[..., 3:4]
    out = (rgb * a + 255 * (255 - a) + 127) // 255
    return out.astype(np.uint8)


def encode_png(img: RgbRaster) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img.pixels), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def budget_dimensions(width: int, height: int, max_dim: int) -> tuple[int, int]:
    """Target size for :func:`resize_to_budget` (aspect-preserving, rounded half up)."""
    if max_dim < 1:
        raise ValueError(f"max_dim must be >= 1, got {max_dim}")
    longest = max(width, height)
    if longest <= max_dim:
        return width, height

    def scale(side: int) -> int:
        return max(1, (2 * side * max_dim + longest) // (2 * longest))

    return scale(width), scale(height)


def resize_to_budget(img: RgbRaster, max_dim: int = DEFAULT_MAX_DIM) -> RgbRaster:
    """Downscale so the longer side equals ``max_dim``; never upscales."""
    size = budget_dimensions(img.width, img.height, max_dim)
    if size == (img.width, img.height):
        return img
    src = Image.fromarray(np.ascontiguousarray(img.pixels), mode="RGB")
    out = src.resize(size, resample=Image.Resampling.BILINEAR)
    return RgbRaster(np.asarray(out, dtype=np.uint8), img.source_id)


def to_grayscale(img: RgbRaster) -> GrayRaster:
    # Integer weighted sum then one division keeps R == G == B exact.
    p = img.pixels.astype(np.int32)
    wr, wg, wb = _GRAY_WEIGHTS
    total = wr * p[..., 0] + wg * p[..., 1] + wb * p[..., 2]
    return GrayRaster(total / 100.0)


def sobel_magnitude(gray: GrayRaster) -> np.ndarray:
    """Sobel gradient magnitude with edge-replication padding."""
    p = np.pad(gray.values, 1, mode="edge")
    left = p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2]
    right = p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]
    top = p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:]
    bottom = p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]
    gx = right - left
    gy = bottom - top
    return np.sqrt(gx * gx + gy * gy)


def detect_edges(gray: GrayRaster, threshold: float = DEFAULT_EDGE_THRESHOLD) -> EdgeMap:
    """Flag pixels whose Sobel magnitude reaches ``threshold`` (0-255 grayscale units)."""
    if not threshold > 0:
        raise ValueError(f"edge threshold must be > 0, got {threshold}")
    return EdgeMap((sobel_magnitude(gray) >= threshold).astype(np.uint8))
