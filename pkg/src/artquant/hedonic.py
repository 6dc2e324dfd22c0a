"""Hedonic log-price regression with the information measures as covariates.

The model is

    ln(price) = sum_j theta_j ln(1000 V_j) [+ gamma ln(1000 V_line)^2]
                + sum_k alpha_k x_k + sum_t phi_t D_t + const + e

estimated by OLS through a column-pivoted QR factorisation, with HC1
heteroskedasticity-robust standard errors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    AlignmentError,
    ConfigMismatchError,
    DomainError,
    MissingTermError,
    RankDeficiencyError,
    SchemaError,
    UnknownLevelError,
    ValidationError,
)
from .features import MEASURES, FeatureVector, fingerprint

log = logging.getLogger(__name__)

INTERCEPT = "Constant"
QUADRATIC_LINE = "log(V_line)^2"
ATTRIBUTES = {
    "surface": "Surface",
    "surface2": "Surface^2",
    "age": "Age",
    "signature": "Signature",
    "dated": "Dated",
}
RANK_TOLERANCE = 1e-10


def info_column(measure: str) -> str:
    return f"log(V_{measure})"


INFO_COLUMNS = tuple(info_column(m) for m in MEASURES) + (QUADRATIC_LINE,)


@dataclass(frozen=True)
class SaleRecord:
    """One auction observation. ``surface`` is in units of 1000 cm^2."""

    id: str
    price: float
    sale_year: int
    age: float
    surface: float
    signature: int
    dated: int
    material: str
    city: str
    salesroom: str
    image_ref: str = ""
    row: int | None = field(default=None, compare=False)

    def __post_init__(self):
        def bad(column, msg):
            return ValidationError(msg, row=self.row, column=column)

        if not (isinstance(self.price, (int, float)) and math.isfinite(self.price) and self.price > 0):
            raise bad("price_usd", f"price must be > 0, got {self.price!r}")
        if not (math.isfinite(self.surface) and self.surface > 0):
            raise bad("surface_1000cm2", f"surface must be > 0, got {self.surface!r}")
        if not (math.isfinite(self.age) and self.age >= 0):
            raise bad("age", f"age must be >= 0, got {self.age!r}")
        for name in ("signature", "dated"):
            if getattr(self, name) not in (0, 1):
                raise bad(name, f"{name} must be 0 or 1, got {getattr(self, name)!r}")
        if int(self.sale_year) != self.sale_year:
            raise bad("sale_year", f"sale_year must be an integer, got {self.sale_year!r}")

    def category(self, family: str) -> str:
        value = getattr(self, family)
        return str(value)


@dataclass(frozen=True)
class DummyFamily:
    """A categorical control entered as 0/1 dummies with one omitted base level.

    ``base=None`` means the smallest level present in the data (used for
    sale years). ``levels=None`` means "every level present in the data".
    """

    name: str
    base: str | None = "Others"
    levels: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "base": self.base, "levels": None if self.levels is None else list(self.levels)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "DummyFamily":
        levels = data.get("levels")
        base = data.get("base", "Others")
        return cls(
            name=str(data["name"]),
            base=None if base is None else str(base),
            levels=None if levels is None else tuple(str(v) for v in levels),
        )


FAMILY_NAMES = ("material", "city", "salesroom", "sale_year")


def default_families() -> tuple[DummyFamily, ...]:
    return (
        DummyFamily("material"),
        DummyFamily("city"),
        DummyFamily("salesroom"),
        DummyFamily("sale_year", base=None),
    )


@dataclass(frozen=True)
class ModelSpec:
    information_terms: tuple[str, ...] = MEASURES
    line_quadratic: bool = True
    attribute_terms: tuple[str, ...] = tuple(ATTRIBUTES)
    dummy_families: tuple[DummyFamily, ...] = field(default_factory=default_families)
    log_scale_factor: float = 1000.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "information_terms", tuple(self.information_terms))
        object.__setattr__(self, "attribute_terms", tuple(self.attribute_terms))
        object.__setattr__(self, "dummy_families", tuple(self.dummy_families))
        unknown = set(self.information_terms) - set(MEASURES)
        if unknown or len(set(self.information_terms)) != len(self.information_terms):
            raise ValueError(f"bad information terms {self.information_terms!r}")
        unknown = set(self.attribute_terms) - set(ATTRIBUTES)
        if unknown or len(set(self.attribute_terms)) != len(self.attribute_terms):
            raise ValueError(f"bad attribute terms {self.attribute_terms!r}")
        if self.line_quadratic and "line" not in self.information_terms:
            raise ValueError("the quadratic line term requires the linear line term")
        names = [f.name for f in self.dummy_families]
        if len(set(names)) != len(names) or set(names) - set(FAMILY_NAMES):
            raise ValueError(f"bad dummy families {names!r}")
        if not self.log_scale_factor > 0:
            raise ValueError("log_scale_factor must be > 0")

    @classmethod
    def preset(cls, name: str) -> "ModelSpec":
        """The three nested benchmark specifications: ``attributes``, ``line-color`` and ``full``."""
        presets = {
            "attributes": dict(information_terms=(), line_quadratic=False),
            "line-color": dict(information_terms=("line", "color"), line_quadratic=True),
            "full": dict(information_terms=MEASURES, line_quadratic=True),
        }
        if name not in presets:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(presets)}")
        return cls(name=name, **presets[name])

    @property
    def info_columns(self) -> tuple[str, ...]:
        cols = []
        for m in MEASURES:
            if m in self.information_terms:
                cols.append(info_column(m))
                if m == "line" and self.line_quadratic:
                    cols.append(QUADRATIC_LINE)
        return tuple(cols)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "information_terms": list(self.information_terms),
            "line_quadratic": self.line_quadratic,
            "attribute_terms": list(self.attribute_terms),
            "dummy_families": [f.to_dict() for f in self.dummy_families],
            "log_scale_factor": self.log_scale_factor,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelSpec":
        allowed = {"name", "information_terms", "line_quadratic", "attribute_terms", "dummy_families", "log_scale_factor"}
        extra = set(data) - allowed
        if extra:
            raise ValueError(f"unknown model spec keys: {sorted(extra)}")
        kwargs = dict(data)
        if "dummy_families" in kwargs:
            kwargs["dummy_families"] = tuple(DummyFamily.from_dict(f) for f in kwargs["dummy_families"])
        for key in ("information_terms", "attribute_terms"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "log_scale_factor" in kwargs:
            kwargs["log_scale_factor"] = float(kwargs["log_scale_factor"])
        return cls(**kwargs)

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    response: np.ndarray
    matrix: np.ndarray
    columns: tuple[str, ...]
    record_ids: tuple[str, ...] = ()
    bases: Mapping[str, str] = field(default_factory=dict)
    spec_fingerprint: str = ""

    def __post_init__(self):
        y = np.array(self.response, dtype=np.float64)
        X = np.array(self.matrix, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0] or X.shape[1] != len(self.columns):
            raise SchemaError("response, matrix and columns disagree in shape")
        if len(set(self.columns)) != len(self.columns):
            raise SchemaError("duplicate column names")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "matrix", X)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "record_ids", tuple(self.record_ids))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.matrix[:, self.columns.index(name)]

    def row(self, i: int) -> dict[str, float]:
        return dict(zip(self.columns, (float(v) for v in self.matrix[i])))


def scaled_log(v: float, factor: float = 1000.0, what: str = "value") -> float:
    if not v > 0:
        raise DomainError(f"{what} must be > 0 to take logs, got {v!r}")
    return math.log(factor * v)


def transform_information(fv: FeatureVector, spec: ModelSpec) -> dict[str, float]:
    """Information columns of one design row: ``ln(factor * V)`` and the line square."""
    out = {}
    for m in MEASURES:
        if m not in spec.information_terms:
            continue
        label = f"V_{m} of {fv.source_id or 'feature vector'}"
        lv = scaled_log(fv.measure(m), spec.log_scale_factor, label)
        out[info_column(m)] = lv
        if m == "line" and spec.line_quadratic:
            out[QUADRATIC_LINE] = lv * lv
    return out


def _attribute_values(rec: SaleRecord, spec: ModelSpec) -> dict[str, float]:
    values = {
        "surface": float(rec.surface),
        "surface2": float(rec.surface) ** 2,
        "age": float(rec.age),
        "signature": float(rec.signature),
        "dated": float(rec.dated),
    }
    return {ATTRIBUTES[a]: values[a] for a in spec.attribute_terms}


def _sort_levels(levels: Iterable[str]) -> list[str]:
    def key(v):
        try:
            return (0, float(v), v)
        except ValueError:
            return (1, 0.0, v)

    return sorted(set(levels), key=key)


def _dummy_block(records: Sequence[SaleRecord], fam: DummyFamily):
    observed = [r.category(fam.name) for r in records]
    present = _sort_levels(observed)
    base = fam.base if fam.base is not None else (present[0] if present else None)
    if fam.levels is not None:
        allowed = set(fam.levels) | ({base} if base is not None else set())
        for rec, value in zip(records, observed):
            if value not in allowed:
                raise UnknownLevelError(
                    f"record {rec.id!r}: {fam.name} level {value!r} is not declared (declared: {sorted(allowed)})"
                )
        levels = list(fam.levels)
    else:
        levels = present
    if base not in present and present:
        fallback = present[0]
        log.warning("%s base level %r absent from data; using %r as base", fam.name, base, fallback)
        base = fallback
    columns, names, seen = [], [], {}
    observed_arr = np.array(observed, dtype=object)
    for level in levels:
        if level == base:
            continue
        col = (observed_arr == level).astype(np.float64)
        if not col.any():
            log.warning("%s level %r does not occur in the data; no column emitted", fam.name, level)
            continue
        seen[level] = seen.get(level, 0) + 1
        name = f"{fam.name}:{level}" + (f"#{seen[level]}" if seen[level] > 1 else "")
        names.append(name)
        columns.append(col)
    return names, columns, base


def build_design_matrix(
    records: Sequence[SaleRecord], features: Sequence[FeatureVector], spec: ModelSpec
) -> DesignMatrix:
    """Assemble the response vector and regressors for ``spec``.

    Column order: information terms, attributes, dummy blocks, ``Constant``.
    """
    if len(records) != len(features):
        raise AlignmentError(f"{len(records)} records but {len(features)} feature vectors")
    for rec, fv in zip(records, features):
        if fv.source_id and fv.source_id != rec.id:
            raise AlignmentError(f"feature vector {fv.source_id!r} paired with record {rec.id!r}")
    y = np.empty(len(records))
    rows = []
    for i, (rec, fv) in enumerate(zip(records, features)):
        y[i] = scaled_log(rec.price, 1.0, f"price of record {rec.id!r}")
        row = transform_information(fv, spec)
        row.update(_attribute_values(rec, spec))
        rows.append(row)
    names = list(spec.info_columns) + [ATTRIBUTES[a] for a in spec.attribute_terms]
    blocks = [np.array([r[c] for r in rows]).reshape(len(rows)) for c in names]
    bases = {}
    for fam in spec.dummy_families:
        fam_names, fam_cols, base = _dummy_block(records, fam)
        names.extend(fam_names)
        blocks.extend(fam_cols)
        bases[fam.name] = base
    names.append(INTERCEPT)
    blocks.append(np.ones(len(records)))
    X = np.column_stack(blocks) if records else np.empty((0, len(names)))
    return DesignMatrix(
        response=y,
        matrix=X,
        columns=tuple(names),
        record_ids=tuple(r.id for r in records),
        bases=bases,
        spec_fingerprint=spec.fingerprint(),
    )


# -- estimation -------------------------------------------------------------


@dataclass(frozen=True)
class _Factor:
    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray
    norms: np.ndarray


def _factorize(dm: DesignMatrix) -> _Factor:
    X = dm.matrix
    n, k = X.shape
    if n <= k:
        raise DomainError(f"need more observations than columns (n={n}, k={k})")
    norms = np.sqrt(np.einsum("ij,ij->j", X, X))
    zero = [dm.columns[j] for j in np.flatnonzero(norms == 0)]
    if zero:
        raise RankDeficiencyError(f"all-zero columns: {', '.join(zero)}", zero)
    Xs = X / norms
    q, r, perm = scipy.linalg.qr(Xs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0]))
    if rank < k:
        _raise_rank_error(dm, Xs, perm, rank)
    return _Factor(q, r, perm, norms)


def _raise_rank_error(dm: DesignMatrix, Xs: np.ndarray, perm: np.ndarray, rank: int):
    basis = perm[:rank]
    involved: set[int] = set()
    details = []
    for j in perm[rank:]:
        coef, *_ = np.linalg.lstsq(Xs[:, basis], Xs[:, j], rcond=None)
        partners = [int(basis[i]) for i in np.flatnonzero(np.abs(coef) > 1e-6)]
        involved.update(partners)
        involved.add(int(j))
        details.append(f"{dm.columns[j]} ~ {' + '.join(dm.columns[p] for p in partners) or '0'}")
    cols = [dm.columns[j] for j in sorted(involved)]
    raise RankDeficiencyError(
        f"design matrix has rank {rank} < {dm.k}; collinear columns: {', '.join(cols)} ({'; '.join(details)})",
        cols,
    )


def _hc1_cov(f: _Factor, resid: np.ndarray) -> np.ndarray:
    n, k = f.q.shape
    # (X'X)^-1 X' diag(e^2) X (X'X)^-1 = R^-1 (Q'diag(e^2)Q) R^-T on the scaled, pivoted columns.
    r_inv = scipy.linalg.solve_triangular(f.r, np.eye(k))
    a = f.q * resid[:, None]
    meat = a.T @ a
    cov_p = r_inv @ meat @ r_inv.T
    cov = np.empty_like(cov_p)
    cov[np.ix_(f.perm, f.perm)] = cov_p
    cov /= np.outer(f.norms, f.norms)
    return cov * (n / (n - k))


def _classical_cov(f: _Factor, resid: np.ndarray) -> np.ndarray:
    n, k = f.q.shape
    r_inv = scipy.linalg.solve_triangular(f.r, np.eye(k))
    cov_p = r_inv @ r_inv.T
    cov = np.empty_like(cov_p)
    cov[np.ix_(f.perm, f.perm)] = cov_p
    cov /= np.outer(f.norms, f.norms)
    return cov * (float(resid @ resid) / (n - k))


@dataclass(frozen=True, eq=False)
class ModelFit:
    columns: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    r2: float
    adj_r2: float
    n: int
    k: int
    residuals: np.ndarray | None = None
    spec_fingerprint: str = ""
    feature_fingerprint: str | None = None
    spec: ModelSpec | None = None
    bases: Mapping[str, str] = field(default_factory=dict)

    @property
    def t_stats(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.std_errors

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise MissingTermError(f"column {name!r} is not in the fitted model") from None

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.index(name)])

    def se(self, name: str) -> float:
        return float(self.std_errors[self.index(name)])

    def t(self, name: str) -> float:
        return float(self.t_stats[self.index(name)])

    def to_dict(self) -> dict:
        t = self.t_stats
        return {
            "columns": list(self.columns),
            "coefficients": {c: float(v) for c, v in zip(self.columns, self.coefficients)},
            "std_errors": {c: float(v) for c, v in zip(self.columns, self.std_errors)},
            "t_stats": {c: _json_float(v) for c, v in zip(self.columns, t)},
            "stars": {c: significance_stars(v) for c, v in zip(self.columns, t)},
            "r2": _json_float(self.r2),
            "adj_r2": _json_float(self.adj_r2),
            "n": self.n,
            "k": self.k,
            "spec_fingerprint": self.spec_fingerprint,
            "feature_fingerprint": self.feature_fingerprint,
            "bases": dict(self.bases),
            "spec": None if self.spec is None else self.spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelFit":
        cols = tuple(data["columns"])
        spec = data.get("spec")

        def as_float(v):
            return float("nan") if v is None else float(v)

        return cls(
            columns=cols,
            coefficients=np.array([float(data["coefficients"][c]) for c in cols]),
            std_errors=np.array([float(data["std_errors"][c]) for c in cols]),
            r2=as_float(data["r2"]),
            adj_r2=as_float(data["adj_r2"]),
            n=int(data["n"]),
            k=int(data["k"]),
            spec_fingerprint=data.get("spec_fingerprint", ""),
            feature_fingerprint=data.get("feature_fingerprint"),
            spec=None if spec is None else ModelSpec.from_dict(spec),
            bases=dict(data.get("bases", {})),
        )


def _json_float(v) -> float | None:
    v = float(v)
    return v if math.isfinite(v) else None


def ols_fit(
    dm: DesignMatrix, spec: ModelSpec | None = None, feature_fingerprint: str | None = None
) -> ModelFit:
    """Least-squares fit with HC1 robust standard errors."""
    f = _factorize(dm)
    y = dm.response
    z = f.q.T @ y
    b_perm = scipy.linalg.solve_triangular(f.r, z)
    beta = np.empty(dm.k)
    beta[f.perm] = b_perm
    beta /= f.norms
    resid = y - dm.matrix @ beta
    se = np.sqrt(np.diag(_hc1_cov(f, resid)))
    ssr = float(resid @ resid)
    centered = y - y.mean()
    sst = float(centered @ centered)
    r2 = 1.0 - ssr / sst if sst > 0 else float("nan")
    adj = 1.0 - (1.0 - r2) * (dm.n - 1) / (dm.n - dm.k)
    resid.setflags(write=False)
    return ModelFit(
        columns=dm.columns,
        coefficients=beta,
        std_errors=se,
        r2=r2,
        adj_r2=adj,
        n=dm.n,
        k=dm.k,
        residuals=resid,
        spec_fingerprint=dm.spec_fingerprint,
        feature_fingerprint=feature_fingerprint,
        spec=spec,
        bases=dict(dm.bases),
    )


def _check_fit_matches(fit: ModelFit, dm: DesignMatrix):
    if fit.columns != dm.columns or fit.residuals is None or fit.residuals.shape[0] != dm.n:
        raise SchemaError("fit was not produced from this design matrix")


def robust_standard_errors(fit: ModelFit, dm: DesignMatrix) -> np.ndarray:
    """HC1 sandwich standard errors, in column order."""
    _check_fit_matches(fit, dm)
    return np.sqrt(np.diag(_hc1_cov(_factorize(dm), np.asarray(fit.residuals))))


def classical_standard_errors(fit: ModelFit, dm: DesignMatrix) -> np.ndarray:
    """Homoskedastic OLS standard errors, for comparison."""
    _check_fit_matches(fit, dm)
    return np.sqrt(np.diag(_classical_cov(_factorize(dm), np.asarray(fit.residuals))))


# -- prediction -------------------------------------------------------------


def predict_log_price(fit: ModelFit, row: Mapping[str, float]) -> float:
    if set(row) != set(fit.columns) or len(row) != len(fit.columns):
        missing = sorted(set(fit.columns) - set(row))
        extra = sorted(set(row) - set(fit.columns))
        raise SchemaError(f"row columns do not match the model (missing {missing}, unexpected {extra})")
    x = np.array([float(row[c]) for c in fit.columns])
    return float(x @ fit.coefficients)


def _fit_info_columns(fit: ModelFit) -> list[str]:
    return [c for c in fit.columns if c in INFO_COLUMNS]


def price_contributions(
    fit: ModelFit,
    a: FeatureVector,
    b: FeatureVector,
    shared_attrs: Mapping[str, float] | None = None,
) -> dict[str, float]:
    """Per-term log-price difference ``coef * (term(a) - term(b))``."""
    if not a.same_analysis(b):
        raise ConfigMismatchError(
            f"feature vectors are not comparable: fingerprint {a.config_fingerprint!r} at "
            f"{a.width}x{a.height} vs {b.config_fingerprint!r} at {b.width}x{b.height}"
        )
    if fit.feature_fingerprint and fit.feature_fingerprint != a.config_fingerprint:
        raise ConfigMismatchError(
            f"model was fitted on features {fit.feature_fingerprint!r}, got {a.config_fingerprint!r}"
        )
    cols = _fit_info_columns(fit)
    if not cols:
        raise MissingTermError("model has no information-quantity terms")
    if shared_attrs:
        bad = [c for c in shared_attrs if c not in fit.columns or c in INFO_COLUMNS]
        if bad:
            raise SchemaError(f"shared attributes not usable as controls: {bad}")
    factor = fit.spec.log_scale_factor if fit.spec is not None else 1000.0
    terms = [m for m in MEASURES if info_column(m) in cols]
    view = ModelSpec(
        information_terms=terms,
        line_quadratic=QUADRATIC_LINE in cols,
        attribute_terms=(),
        dummy_families=(),
        log_scale_factor=factor,
    )
    ta = transform_information(a, view)
    tb = transform_information(b, view)
    return {c: fit.coef(c) * (ta[c] - tb[c]) for c in cols}


def price_ratio(
    fit: ModelFit,
    a: FeatureVector,
    b: FeatureVector,
    shared_attrs: Mapping[str, float] | None = None,
) -> float:
    """Predicted price of ``a`` over price of ``b`` with everything else held equal."""
    return math.exp(sum(price_contributions(fit, a, b, shared_attrs).values()))


# -- inference summary ------------------------------------------------------


def two_sided_p(t: float) -> float:
    """Two-sided p-value under the standard normal."""
    if math.isnan(t):
        return float("nan")
    return math.erfc(abs(t) / math.sqrt(2.0))


def significance_stars(t: float) -> str:
    p = two_sided_p(float(t))
    if math.isnan(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


@dataclass(frozen=True)
class TermReport:
    column: str
    coefficient: float
    std_error: float
    t_stat: float
    p_value: float
    stars: str
    expected_sign: int
    sign_as_expected: bool


def hypothesis_report(fit: ModelFit) -> list[TermReport]:
    """Sign and significance of each information coefficient.

    Every linear information term is expected to be positive; the squared
    line term, when present, is expected to be negative.
    """
    required = [info_column(m) for m in MEASURES]
    missing = [c for c in required if c not in fit.columns]
    if missing:
        raise MissingTermError(f"model lacks information terms: {', '.join(missing)}")
    out = []
    for col in required + ([QUADRATIC_LINE] if QUADRATIC_LINE in fit.columns else []):
        coef, se = fit.coef(col), fit.se(col)
        t = coef / se if se > 0 else (0.0 if coef == 0 else math.copysign(math.inf, coef))
        expected = -1 if col == QUADRATIC_LINE else 1
        out.append(
            TermReport(
                column=col,
                coefficient=coef,
                std_error=se,
                t_stat=t,
                p_value=two_sided_p(t),
                stars=significance_stars(t),
                expected_sign=expected,
                sign_as_expected=coef * expected > 0,
            )
        )
    return out


def report_as_dicts(reports: Sequence[TermReport]) -> list[dict]:
    return [asdict(r) for r in reports]
