"""The five information-quantity measures of a painting image.

Each measure is a population statistic over pixels:

* line  - variance of the binary edge map
* color - variance of the hue angle, achromatic pixels excluded
* value - variance of the gamma-weighted lightness of each pixel
* space - weighted variance of edge-pixel coordinates
* shape - scaled inverse of the SSIM between the left half and the mirrored
  right half of the grayscale image

The joint information quantity is their product, i.e. a sum in logs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Literal, Sequence

import numpy as np

from .errors import GeometryError
from .raster import (
    DEFAULT_EDGE_THRESHOLD,
    DEFAULT_MAX_DIM,
    EdgeMap,
    GrayRaster,
    RgbRaster,
    detect_edges,
    resize_to_budget,
    to_grayscale,
)

MEASURES = ("line", "color", "value", "shape", "space")

StatisticMode = Literal["variance", "std_dev"]

_GAMMA = 2.2
_GREEN_WEIGHT = 1.5
_BLUE_WEIGHT = 0.6
_VALUE_DENOMINATOR = 1 + _GREEN_WEIGHT**_GAMMA + _BLUE_WEIGHT**_GAMMA


@dataclass(frozen=True)
class FeatureConfig:
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD
    resize_max_dim: int = DEFAULT_MAX_DIM
    statistic_mode: StatisticMode = "variance"
    ssim_floor: float = 0.001
    hue_scale: float = 360.0
    # Off: divide coordinate dispersion by 2X and 2Y as in the defining formula.
    normalize_space_by_count: bool = False

    def __post_init__(self):
        if not self.edge_threshold > 0:
            raise ValueError(f"edge_threshold must be > 0, got {self.edge_threshold}")
        if int(self.resize_max_dim) != self.resize_max_dim or self.resize_max_dim < 1:
            raise ValueError(f"resize_max_dim must be a positive integer, got {self.resize_max_dim}")
        if self.statistic_mode not in ("variance", "std_dev"):
            raise ValueError(f"statistic_mode must be 'variance' or 'std_dev', got {self.statistic_mode!r}")
        if not 0 < self.ssim_floor < 1:
            raise ValueError(f"ssim_floor must lie in (0, 1), got {self.ssim_floor}")
        if not self.hue_scale > 0:
            raise ValueError(f"hue_scale must be > 0, got {self.hue_scale}")
        object.__setattr__(self, "edge_threshold", float(self.edge_threshold))
        object.__setattr__(self, "resize_max_dim", int(self.resize_max_dim))
        object.__setattr__(self, "ssim_floor", float(self.ssim_floor))
        object.__setattr__(self, "hue_scale", float(self.hue_scale))
        object.__setattr__(self, "normalize_space_by_count", bool(self.normalize_space_by_count))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown feature config keys: {sorted(unknown)}")
        return cls(**data)

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


def fingerprint(obj) -> str:
    """Stable short hash of a JSON-serialisable object."""
    canon = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode("ascii")).hexdigest()[:16]


@dataclass(frozen=True)
class SsimParams:
    k1: float = 0.01
    k2: float = 0.03
    L: float = 256.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.L) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.L) ** 2


CSV_COLUMNS = (
    "source_id",
    "v_line",
    "v_color",
    "v_value",
    "v_shape",
    "v_space",
    "width",
    "height",
    "config_fingerprint",
)


@dataclass(frozen=True)
class FeatureVector:
    v_line: float
    v_color: float
    v_value: float
    v_shape: float
    v_space: float
    source_id: str = ""
    width: int = 0
    height: int = 0
    config_fingerprint: str = ""

    def measure(self, name: str) -> float:
        return getattr(self, f"v_{name}")

    def measures(self) -> tuple[float, ...]:
        return tuple(self.measure(m) for m in MEASURES)

    @property
    def information_quantity(self) -> float:
        """Product of the five measures."""
        return math.prod(self.measures())

    def same_analysis(self, other: "FeatureVector") -> bool:
        """True when both vectors come from one config at one analysed resolution."""
        return (
            self.config_fingerprint == other.config_fingerprint
            and (self.width, self.height) == (other.width, other.height)
        )

    def with_source(self, source_id: str) -> "FeatureVector":
        return replace(self, source_id=source_id)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureVector":
        return cls(
            v_line=float(data["v_line"]),
            v_color=float(data["v_color"]),
            v_value=float(data["v_value"]),
            v_shape=float(data["v_shape"]),
            v_space=float(data["v_space"]),
            source_id=str(data.get("source_id", "")),
            width=int(data.get("width", 0)),
            height=int(data.get("height", 0)),
            config_fingerprint=str(data.get("config_fingerprint", "")),
        )

    def to_csv_row(self) -> list[str]:
        return [
            self.source_id,
            *(repr(float(v)) for v in self.measures()),
            str(self.width),
            str(self.height),
            self.config_fingerprint,
        ]

    @classmethod
    def from_csv_row(cls, row: dict) -> "FeatureVector":
        return cls.from_dict(row)


def population_variance(values: np.ndarray) -> float:
    """Two-pass population variance, shifted by the first sample.

    The shift makes constant samples return exactly 0.0.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 2:
        return 0.0
    d = x - x[0]
    m = d.mean()
    r = d - m
    return float(np.mean(r * r))


def _apply_mode(var: float, cfg: FeatureConfig) -> float:
    return math.sqrt(var) if cfg.statistic_mode == "std_dev" else var


def variance_of_line(edges: EdgeMap, cfg: FeatureConfig | None = None) -> float:
    cfg = cfg or FeatureConfig()
    return _apply_mode(population_variance(edges.flags), cfg)


def hue_value(px: Sequence[int]) -> float | None:
    """Hue angle in degrees in [0, 360), or None when the pixel is achromatic."""
    r, g, b = (float(c) for c in px)
    mx, mn = max(r, g, b), min(r, g, b)
    d = mx - mn
    if d == 0:
        return None
    if mx == r:
        h = 60.0 * (g - b) / d
        return h + 360.0 if g < b else h + 0.0
    if mx == g:
        return 60.0 * (b - r) / d + 120.0
    return 60.0 * (r - g) / d + 240.0


def hue_values(img: RgbRaster) -> np.ndarray:
    """Per-pixel hue in degrees, NaN where undefined. Shape ``(height, width)``."""
    p = img.pixels.astype(np.int16)
    r, g, b = p[..., 0], p[..., 1], p[..., 2]
    mx = p.max(axis=2)
    d = mx - p.min(axis=2)
    on_r = mx == r
    on_g = ~on_r & (mx == g)
    # Branch order R, G, B breaks ties the same way as hue_value().
    num = np.where(on_r, g - b, np.where(on_g, b - r, r - g))
    offset = np.where(on_r, np.where(g < b, 360.0, 0.0), np.where(on_g, 120.0, 240.0))
    chroma = d > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        h = 60.0 * num / d + offset
    h[~chroma] = np.nan
    return h


def variance_of_color(img: RgbRaster, cfg: FeatureConfig | None = None) -> float:
    cfg = cfg or FeatureConfig()
    h = hue_values(img)
    defined = h[~np.isnan(h)]
    if defined.size == 0:
        return 0.0
    return _apply_mode(population_variance(defined / cfg.hue_scale), cfg)


def _channel_luts() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    levels = np.arange(256, dtype=np.float64)
    red = (levels / 255) ** _GAMMA
    green = (_GREEN_WEIGHT * levels / 255) ** _GAMMA
    blue = (_BLUE_WEIGHT * levels / 255) ** _GAMMA
    for lut in (red, green, blue):
        lut.setflags(write=False)
    return red, green, blue


_RED_LUT, _GREEN_LUT, _BLUE_LUT = _channel_luts()


def pixel_value(px: Sequence[int]) -> float:
    """Gamma-weighted lightness of one pixel, in [0, 1]."""
    r, g, b = (int(c) for c in px)
    num = _RED_LUT[r] + _GREEN_LUT[g] + _BLUE_LUT[b]
    return math.sqrt(num / _VALUE_DENOMINATOR)


def pixel_values(img: RgbRaster) -> np.ndarray:
    p = img.pixels
    num = _RED_LUT[p[..., 0]] + _GREEN_LUT[p[..., 1]] + _BLUE_LUT[p[..., 2]]
    return np.sqrt(num / _VALUE_DENOMINATOR)


def variance_of_value(img: RgbRaster, cfg: FeatureConfig | None = None) -> float:
    cfg = cfg or FeatureConfig()
    return _apply_mode(population_variance(pixel_values(img)), cfg)


def _sum_sq_dev(x: np.ndarray) -> float:
    d = x - x[0]
    r = d - d.mean()
    return float(np.sum(r * r))


def variance_of_space(edges: EdgeMap, cfg: FeatureConfig | None = None) -> float:
    """Dispersion of edge-pixel positions on 1-based coordinates scaled to (0, 1].

    The x and y sums of squared deviations are divided by ``2 * width`` and
    ``2 * height`` unless ``cfg.normalize_space_by_count`` is set, in which
    case both are divided by twice the number of edge pixels.
    """
    cfg = cfg or FeatureConfig()
    ys, xs = np.nonzero(edges.flags)
    count = xs.size
    if count < 2:
        return 0.0
    width, height = edges.width, edges.height
    x_hat = (xs + 1) / width
    y_hat = (ys + 1) / height
    if cfg.normalize_space_by_count:
        den_x = den_y = 2 * count
    else:
        den_x, den_y = 2 * width, 2 * height
    return _sum_sq_dev(x_hat) / den_x + _sum_sq_dev(y_hat) / den_y


def lateral_halves(gray: GrayRaster) -> tuple[np.ndarray, np.ndarray]:
    """Left half and horizontally mirrored right half; odd widths drop the middle column."""
    if gray.width < 2:
        raise GeometryError(f"lateral symmetry needs width >= 2, got {gray.width}")
    half = gray.width // 2
    g = gray.values
    return g[:, :half], g[:, gray.width - half :][:, ::-1]


def lateral_ssim(gray: GrayRaster, params: SsimParams | None = None) -> float:
    """Global SSIM between the left half and the mirrored right half."""
    p = params or SsimParams()
    left, right = lateral_halves(gray)
    mu_l = float(left.mean())
    mu_r = float(right.mean())
    dl = left - mu_l
    dr = right - mu_r
    var_l = float(np.mean(dl * dl))
    var_r = float(np.mean(dr * dr))
    cov = float(np.mean(dl * dr))
    c1, c2 = p.c1, p.c2
    num = (2 * mu_l * mu_r + c1) * (2 * cov + c2)
    den = (mu_l * mu_l + mu_r * mu_r + c1) * (var_l + var_r + c2)
    return num / den


def variance_of_shape(
    gray: GrayRaster, cfg: FeatureConfig | None = None, params: SsimParams | None = None
) -> float:
    cfg = cfg or FeatureConfig()
    ssim = lateral_ssim(gray, params)
    return min(1.0, 1.0 / (1000.0 * max(ssim, cfg.ssim_floor)))


def extract_features(
    img: RgbRaster, cfg: FeatureConfig | None = None, params: SsimParams | None = None
) -> FeatureVector:
    """Run the full pipeline (resize, grayscale, edges) and compute all five measures."""
    cfg = cfg or FeatureConfig()
    params = params or SsimParams()
    tag = cfg.fingerprint()
    if params != SsimParams():
        tag = fingerprint({**cfg.to_dict(), "ssim": asdict(params)})
    work = resize_to_budget(img, cfg.resize_max_dim)
    gray = to_grayscale(work)
    edges = detect_edges(gray, cfg.edge_threshold)
    return FeatureVector(
        v_line=variance_of_line(edges, cfg),
        v_color=variance_of_color(work, cfg),
        v_value=variance_of_value(work, cfg),
        v_shape=variance_of_shape(gray, cfg, params),
        v_space=variance_of_space(edges, cfg),
        source_id=img.source_id,
        width=work.width,
        height=work.height,
        config_fingerprint=tag,
    )
