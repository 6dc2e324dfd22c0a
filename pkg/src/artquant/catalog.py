"""Sale-record catalogs, feature caching and synthetic datasets."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .features import CSV_COLUMNS, FeatureConfig, FeatureVector, extract_features
from .hedonic import (
    ATTRIBUTES,
    INTERCEPT,
    QUADRATIC_LINE,
    DesignMatrix,
    ModelSpec,
    SaleRecord,
    build_design_matrix,
    info_column,
)
from .raster import RgbRaster, decode_image, encode_png

log = logging.getLogger(__name__)

CATALOG_HEADER = (
    "id",
    "price_usd",
    "sale_year",
    "age",
    "surface_1000cm2",
    "signature",
    "dated",
    "material",
    "city",
    "salesroom",
    "image_path",
)


# -- catalog CSV ------------------------------------------------------------


def _number(text: str, row: int, column: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row=row, column=column) from None
    if not math.isfinite(v):
        raise ValidationError(f"not a finite number: {text!r}", row=row, column=column)
    return v


def _flag(text: str, row: int, column: str) -> int:
    if text.strip() not in ("0", "1"):
        raise ValidationError(f"must be 0 or 1, got {text!r}", row=row, column=column)
    return int(text)


def _year(text: str, row: int, window: tuple[int, int] | None) -> int:
    try:
        year = int(text.strip())
    except ValueError:
        raise ValidationError(f"unparseable year {text!r}", row=row, column="sale_year") from None
    if window is not None and not window[0] <= year <= window[1]:
        raise ValidationError(f"year {year} outside sample window {window[0]}-{window[1]}", row=row, column="sale_year")
    return year


def parse_catalog(text: str, sale_years: tuple[int, int] | None = None) -> list[SaleRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty catalog file", row=1) from None
    if tuple(h.strip() for h in header) != CATALOG_HEADER:
        raise ParseError(f"header must be exactly {','.join(CATALOG_HEADER)}; got {','.join(header)}", row=1)
    records, seen = [], set()
    for row_no, cells in enumerate(reader, start=2):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(CATALOG_HEADER):
            raise ParseError(f"expected {len(CATALOG_HEADER)} fields, got {len(cells)}", row=row_no)
        v = dict(zip(CATALOG_HEADER, (c.strip() for c in cells)))
        if not v["id"]:
            raise ValidationError("empty id", row=row_no, column="id")
        if v["id"] in seen:
            raise ValidationError(f"duplicate id {v['id']!r}", row=row_no, column="id")
        seen.add(v["id"])
        for cat in ("material", "city", "salesroom"):
            if not v[cat]:
                raise ValidationError("empty category", row=row_no, column=cat)
        records.append(
            SaleRecord(
                id=v["id"],
                price=_number(v["price_usd"], row_no, "price_usd"),
                sale_year=_year(v["sale_year"], row_no, sale_years),
                age=_number(v["age"], row_no, "age"),
                surface=_number(v["surface_1000cm2"], row_no, "surface_1000cm2"),
                signature=_flag(v["signature"], row_no, "signature"),
                dated=_flag(v["dated"], row_no, "dated"),
                material=v["material"],
                city=v["city"],
                salesroom=v["salesroom"],
                image_ref=v["image_path"],
                row=row_no,
            )
        )
    return records


def load_catalog(path: str | os.PathLike, sale_years: tuple[int, int] | None = None) -> list[SaleRecord]:
    """Read and validate a catalog CSV (UTF-8, exact positional header)."""
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc})") from None
    return parse_catalog(text, sale_years)


def _fmt(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def format_catalog(records: Iterable[SaleRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CATALOG_HEADER)
    for r in records:
        w.writerow(
            [
                r.id, _fmt(r.price), str(int(r.sale_year)), _fmt(r.age), _fmt(r.surface),
                str(r.signature), str(r.dated), r.material, r.city, r.salesroom, r.image_ref,
            ]
        )
    return buf.getvalue()


def save_catalog(records: Iterable[SaleRecord], path: str | os.PathLike) -> None:
    Path(path).write_text(format_catalog(records), encoding="utf-8")


# -- feature CSV ------------------------------------------------------------


def format_features(vectors: Iterable[FeatureVector]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for fv in vectors:
        w.writerow(fv.to_csv_row())
    return buf.getvalue()


def write_features_csv(vectors: Iterable[FeatureVector], path: str | os.PathLike) -> None:
    Path(path).write_text(format_features(vectors), encoding="utf-8")


def read_features_csv(path: str | os.PathLike) -> list[FeatureVector]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ParseError(f"features header must be {','.join(CSV_COLUMNS)}", row=1)
        out = []
        for row_no, row in enumerate(reader, start=2):
            try:
                out.append(FeatureVector.from_csv_row(row))
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), row=row_no) from None
    return out


# -- cache ------------------------------------------------------------------


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class FeatureCache:
    """Feature vectors keyed by (image content hash, config fingerprint).

    Backed by an append-only JSON-lines file when ``path`` is given. Entries
    are stored without a source id; callers attach their own.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._data: dict[tuple[str, str], FeatureVector] = {}
        self.hits = 0
        self.misses = 0
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        key = (entry["hash"], entry["config_fingerprint"])
                        self._data[key] = FeatureVector.from_dict(entry["feature_vector"])
                    except (ValueError, KeyError, TypeError) as exc:
                        log.warning("%s:%d: skipping corrupt cache entry (%s)", self.path, line_no, exc)

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, key: tuple[str, str]) -> bool:
        with self._lock:
            return key in self._data

    def get(self, digest: str, config_fingerprint: str) -> FeatureVector | None:
        with self._lock:
            fv = self._data.get((digest, config_fingerprint))
            if fv is None:
                self.misses += 1
            else:
                self.hits += 1
            return fv

    def put(self, digest: str, config_fingerprint: str, fv: FeatureVector) -> None:
        fv = fv.with_source("")
        with self._lock:
            key = (digest, config_fingerprint)
            if key in self._data:
                return
            self._data[key] = fv
            if self.path is not None:
                entry = {"hash": digest, "config_fingerprint": config_fingerprint, "feature_vector": fv.to_dict()}
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")


# -- batch extraction -------------------------------------------------------


@dataclass(frozen=True)
class RecordError:
    record: SaleRecord
    message: str


@dataclass
class Extraction:
    results: list[tuple[SaleRecord, FeatureVector]]
    errors: list[RecordError]
    computed: int = 0
    cache_hits: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors


class ExtractionFailed(Exception):
    def __init__(self, error: RecordError):
        super().__init__(f"record {error.record.id!r}: {error.message}")
        self.error = error


def resolve_image(record: SaleRecord, image_root: str | os.PathLike | None) -> Path:
    p = Path(record.image_ref)
    if not p.is_absolute() and image_root is not None:
        p = Path(image_root) / p
    return p


def _compute(data: bytes, cfg: FeatureConfig) -> FeatureVector:
    return extract_features(decode_image(data, source_id=""), cfg)


def extract_all(
    records: Sequence[SaleRecord],
    cfg: FeatureConfig | None = None,
    cache: FeatureCache | None = None,
    image_root: str | os.PathLike | None = None,
    workers: int = 1,
    fail_fast: bool = False,
) -> Extraction:
    """Features for every record, in record order.

    Identical image files are analysed once. Failures are collected per
    record unless ``fail_fast`` is set, in which case the first failure in
    record order raises :class:`ExtractionFailed`.
    """
    cfg = cfg or FeatureConfig()
    fp = cfg.fingerprint()
    cache = cache if cache is not None else FeatureCache()
    digests: dict[str, str] = {}
    payloads: dict[str, bytes] = {}
    errors: dict[str, str] = {}
    for rec in records:
        if not rec.image_ref:
            errors[rec.id] = "no image path"
            continue
        path = resolve_image(rec, image_root)
        try:
            data = path.read_bytes()
        except OSError as exc:
            errors[rec.id] = f"cannot read image {path}: {exc.strerror or exc}"
            if fail_fast:
                raise ExtractionFailed(RecordError(rec, errors[rec.id])) from exc
            continue
        digest = content_hash(data)
        digests[rec.id] = digest
        payloads.setdefault(digest, data)

    found: dict[str, FeatureVector] = {}
    todo = []
    for digest in dict.fromkeys(digests.values()):
        fv = cache.get(digest, fp)
        if fv is None:
            todo.append(digest)
        else:
            found[digest] = fv
    hits = sum(1 for d in digests.values() if d in found)

    def work(digest):
        try:
            return digest, _compute(payloads[digest], cfg), None
        except Exception as exc:  # per-image failures are reported, not raised
            return digest, None, f"{type(exc).__name__}: {exc}"

    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, todo))
    else:
        outcomes = [work(d) for d in todo]
    failed: dict[str, str] = {}
    for digest, fv, err in outcomes:
        if fv is None:
            failed[digest] = err
        else:
            found[digest] = fv
            cache.put(digest, fp, fv)

    results, record_errors = [], []
    for rec in records:
        msg = errors.get(rec.id)
        if msg is None and digests[rec.id] in failed:
            msg = failed[digests[rec.id]]
        if msg is not None:
            err = RecordError(rec, msg)
            if fail_fast:
                raise ExtractionFailed(err)
            record_errors.append(err)
            continue
        results.append((rec, found[digests[rec.id]].with_source(rec.id)))
    return Extraction(results, record_errors, computed=len(todo) - len(failed), cache_hits=hits)


# -- synthetic data ---------------------------------------------------------

# Category shares imitate a single-artist auction sample.
MATERIAL_SHARES = {"Board": 0.047, "Burlap": 0.061, "Canvas": 0.815, "Cardboard": 0.022, "Ceramic": 0.033, "Others": 0.021}
CITY_SHARES = {"London": 0.358, "New York": 0.549, "Paris": 0.063, "Others": 0.031}
SALESROOM_SHARES = {"Christie's": 0.518, "Sotheby's": 0.428, "Others": 0.054}
SALE_YEARS = (2000, 2018)
# Rare cells make HC1 errors unreliable, so no level is drawn below this share.
MIN_SHARE = 0.08


def default_coefficients() -> dict[str, float]:
    """Plausible ground truth for the full specification (all five measures)."""
    coefs = {
        info_column("line"): 24.23,
        QUADRATIC_LINE: -2.728,
        info_column("color"): 0.306,
        info_column("value"): 0.459,
        info_column("shape"): 0.242,
        info_column("space"): 0.925,
        "Surface": 0.107,
        "Surface^2": -0.000643,
        "Age": 0.0140,
        "Signature": 0.0227,
        "Dated": 0.329,
        "material:Board": 1.741,
        "material:Burlap": 1.5,
        "material:Canvas": 1.956,
        "material:Cardboard": 1.942,
        "material:Ceramic": 1.2,
        "city:London": 0.894,
        "city:New York": 0.703,
        "city:Paris": 0.164,
        "salesroom:Christie's": 0.622,
        "salesroom:Sotheby's": 0.606,
        INTERCEPT: -53.36,
    }
    years = [-0.241, -0.281, 0.144, 0.679, 0.528, 0.640, 1.001, 1.337, 0.701,
             0.961, 1.359, 0.989, 1.189, 1.169, 1.572, 0.977, 1.297, 1.465]
    for year, c in zip(range(2001, 2019), years):
        coefs[f"sale_year:{year}"] = c
    return coefs


def _random_color(rng: np.random.Generator, chromatic: bool = True) -> np.ndarray:
    if chromatic:
        c = rng.integers(0, 256, 3)
        c[rng.integers(0, 3)] = rng.integers(160, 256)
        return c.astype(np.uint8)
    v = rng.integers(0, 256)
    return np.array([v, v, v], dtype=np.uint8)


def synthetic_painting(rng: np.random.Generator, width: int = 64, height: int = 64) -> np.ndarray:
    """Random composition of rectangles, ellipses and stripes on a coloured ground."""
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = _random_color(rng, chromatic=rng.random() < 0.8)
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(int(rng.integers(1, 14))):
        color = _random_color(rng, chromatic=rng.random() < 0.85)
        kind = rng.integers(0, 3)
        x0, x1 = np.sort(rng.integers(0, width, 2))
        y0, y1 = np.sort(rng.integers(0, height, 2))
        if kind == 0:
            img[y0 : y1 + 1, x0 : x1 + 1] = color
        elif kind == 1:
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            rx, ry = max((x1 - x0) / 2, 1.0), max((y1 - y0) / 2, 1.0)
            img[((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1] = color
        else:
            period = int(rng.integers(2, 12))
            img[(xx + yy * int(rng.integers(0, 2))) % period == 0] = color
    if rng.random() < 0.3:
        half = width // 2
        img[:, width - half :] = img[:, :half][:, ::-1]
    amp = rng.uniform(0, 40)
    if amp > 5:
        noise = rng.normal(0, amp, img.shape)
        img = np.clip(img + noise, 0, 255).astype(np.uint8)
    return img


def _draw_category(rng: np.random.Generator, shares: Mapping[str, float], n: int) -> list[str]:
    names = list(shares)
    p = np.maximum([shares[k] for k in names], MIN_SHARE)
    return [names[i] for i in rng.choice(len(names), size=n, p=p / p.sum())]


@dataclass
class SyntheticDataset:
    records: list[SaleRecord]
    images: dict[str, bytes]
    features: list[FeatureVector]
    truth: dict
    design: DesignMatrix
    signal: np.ndarray = field(repr=False)

    def write(self, out_dir: str | os.PathLike) -> None:
        out = Path(out_dir)
        (out / "images").mkdir(parents=True, exist_ok=True)
        for name, data in self.images.items():
            (out / name).write_bytes(data)
        save_catalog(self.records, out / "catalog.csv")
        (out / "truth.json").write_text(json.dumps(self.truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def noise_sd_for_r2(signal: np.ndarray, target_r2: float) -> float:
    """Noise level at which the population R^2 of ``signal + noise`` is ``target_r2``."""
    if not 0 < target_r2 < 1:
        raise ValueError("target_r2 must lie in (0, 1)")
    return float(np.std(signal) * math.sqrt((1 - target_r2) / target_r2))


def generate_synthetic(
    seed: int,
    n: int,
    true_coefficients: Mapping[str, float] | None = None,
    noise_sd: float | None = None,
    *,
    cfg: FeatureConfig | None = None,
    spec: ModelSpec | None = None,
    image_size: tuple[int, int] = (64, 64),
    target_r2: float = 0.51,
    min_measure: float = 0.01,
    min_line: float = 0.05,
) -> SyntheticDataset:
    """Deterministic synthetic catalog with images and a known log-price model.

    ``noise_sd=None`` picks the noise level whose population R^2 equals
    ``target_r2``. Coefficients absent from ``true_coefficients`` are zero.
    Images with any measure below ``min_measure`` (or an edge variance below
    ``min_line``) are redrawn: near-blank compositions otherwise become
    extreme-leverage points in the log terms.
    """
    if n < 50:
        raise ValueError(f"n must be >= 50, got {n}")
    if not (min_measure > 0 and min_line > 0):
        raise ValueError("measure floors must be > 0")
    if noise_sd is not None and noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    cfg = cfg or FeatureConfig()
    spec = spec or ModelSpec.preset("full")
    coefs = dict(default_coefficients() if true_coefficients is None else true_coefficients)
    rng = np.random.default_rng(seed)
    width, height = image_size

    images: dict[str, bytes] = {}
    features: list[FeatureVector] = []
    for i in range(n):
        while True:
            arr = synthetic_painting(rng, width, height)
            fv = extract_features(RgbRaster(arr), cfg)
            if fv.v_line >= min_line and all(v >= min_measure for v in fv.measures()):
                break
        name = f"images/img{i:04d}.png"
        images[name] = encode_png(RgbRaster(arr))
        features.append(fv.with_source(f"s{i:04d}"))

    surface = np.exp(rng.uniform(math.log(0.3), math.log(15.0), n))
    age = rng.integers(47, 126, n)
    years = rng.integers(SALE_YEARS[0], SALE_YEARS[1] + 1, n)
    signature = (rng.random(n) < 0.564).astype(int)
    dated = (rng.random(n) < 0.617).astype(int)
    material = _draw_category(rng, MATERIAL_SHARES, n)
    city = _draw_category(rng, CITY_SHARES, n)
    salesroom = _draw_category(rng, SALESROOM_SHARES, n)
    # Base levels must occur so that the truth stays relative to them.
    for i, column in enumerate((material, city, salesroom)):
        if "Others" not in column:
            column[i] = "Others"
    if SALE_YEARS[0] not in years:
        years[3] = SALE_YEARS[0]

    records = [
        SaleRecord(
            id=f"s{i:04d}", price=1.0, sale_year=int(years[i]), age=float(age[i]), surface=float(surface[i]),
            signature=int(signature[i]), dated=int(dated[i]), material=material[i], city=city[i],
            salesroom=salesroom[i], image_ref=f"images/img{i:04d}.png",
        )
        for i in range(n)
    ]
    design = build_design_matrix(records, features, spec)
    valid = set(spec.info_columns) | {ATTRIBUTES[a] for a in spec.attribute_terms} | {INTERCEPT}
    unknown = [c for c in coefs if c not in valid and ":" not in c]
    if unknown:
        raise ValueError(f"coefficients for columns outside the specification: {unknown}")
    beta = np.array([float(coefs.get(c, 0.0)) for c in design.columns])
    signal = design.matrix @ beta
    if noise_sd is None:
        noise_sd = noise_sd_for_r2(signal, target_r2)
    log_price = signal + noise_sd * rng.standard_normal(n)
    prices = np.exp(log_price)
    records = [replace(r, price=float(p)) for r, p in zip(records, prices)]
    design = DesignMatrix(np.log(prices), design.matrix, design.columns, design.record_ids, design.bases,
                          design.spec_fingerprint)
    truth = {
        "seed": seed,
        "n": n,
        "noise_sd": float(noise_sd),
        "coefficients": {c: float(coefs.get(c, 0.0)) for c in design.columns},
        "spec": spec.to_dict(),
        "feature_config": cfg.to_dict(),
        "image_size": [width, height],
    }
    return SyntheticDataset(records, images, features, truth, design, signal)

