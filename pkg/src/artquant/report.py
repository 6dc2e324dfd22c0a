"""Plain-text tables for fitted models and feature summaries."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .features import MEASURES, FeatureVector
from .hedonic import (
    ATTRIBUTES,
    INFO_COLUMNS,
    INTERCEPT,
    QUADRATIC_LINE,
    ModelFit,
    TermReport,
    info_column,
    significance_stars,
)

FOOTNOTE = "Robust standard errors in parentheses\n*** p<0.01, ** p<0.05, * p<0.1"
INFO_ROWS = (
    info_column("line"),
    QUADRATIC_LINE,
    info_column("color"),
    info_column("value"),
    info_column("shape"),
    info_column("space"),
)
ATTRIBUTE_ROWS = tuple(ATTRIBUTES.values())
CONTROL_ROWS = (("material", "Material"), ("city", "City"), ("salesroom", "Salesroom"), ("sale_year", "Salesyear"))


def sig4(v: float) -> str:
    """Four significant figures, trailing zeros kept."""
    if v is None or not math.isfinite(v):
        return "n/a"
    if v == 0:
        return "0"
    s = f"{v:#.4g}"
    return s[:-1] if s.endswith(".") else s


def _family(col: str) -> str | None:
    return col.split(":", 1)[0] if ":" in col else None


def fit_table(
    fits: Sequence[ModelFit],
    titles: Sequence[str] | None = None,
    expand_controls: bool = False,
) -> str:
    """Side-by-side coefficient table, one column per fitted model.

    Information rows are always listed, blank where a model omits the term.
    Dummy families collapse to a ``control`` marker unless ``expand_controls``.
    """
    if not fits:
        raise ValueError("no fitted models to tabulate")
    titles = list(titles) if titles else [f"({i + 1})" for i in range(len(fits))]
    if len(titles) != len(fits):
        raise ValueError("one title per model is required")

    rows: list[tuple[str, list[str]]] = []

    def coef_rows(col: str):
        top, bottom = [], []
        for f in fits:
            if col in f.columns:
                c, se = f.coef(col), f.se(col)
                top.append(sig4(c) + significance_stars(c / se if se > 0 else math.nan))
                bottom.append(f"({sig4(se)})")
            else:
                top.append("")
                bottom.append("")
        rows.append((col, top))
        rows.append(("", bottom))

    for col in INFO_ROWS:
        coef_rows(col)
    for col in ATTRIBUTE_ROWS:
        if any(col in f.columns for f in fits):
            coef_rows(col)
    for family, label in CONTROL_ROWS:
        if expand_controls:
            seen = []
            for f in fits:
                seen += [c for c in f.columns if _family(c) == family and c not in seen]
            for col in seen:
                coef_rows(col)
        elif any(_family(c) == family for f in fits for c in f.columns):
            rows.append((label, ["control" if any(_family(c) == family for c in f.columns) else "" for f in fits]))
    known = set(INFO_ROWS) | set(ATTRIBUTE_ROWS) | {INTERCEPT}
    extra = []
    for f in fits:
        extra += [c for c in f.columns if c not in known and _family(c) is None and c not in extra]
    for col in extra:
        coef_rows(col)
    if any(INTERCEPT in f.columns for f in fits):
        coef_rows(INTERCEPT)
    rows.append(("Observations", [str(f.n) for f in fits]))
    rows.append(("Adj-R-squared", [f"{f.adj_r2:.3f}" if math.isfinite(f.adj_r2) else "n/a" for f in fits]))

    label_w = max(len("Variables"), *(len(r[0]) for r in rows))
    col_w = max(12, *(len(t) for t in titles), *(len(c) for _, cells in rows for c in cells))
    header = "Variables".ljust(label_w) + "".join(t.rjust(col_w + 2) for t in titles)
    rule = "-" * len(header)
    lines = [rule, header, rule]
    for label, cells in rows:
        if label == "Observations":
            lines.append(rule)
        lines.append((label.ljust(label_w) + "".join(c.rjust(col_w + 2) for c in cells)).rstrip())
    lines.append(rule)
    lines.append(FOOTNOTE)
    return "\n".join(lines) + "\n"


# -- feature summaries ------------------------------------------------------


def summary_statistics(vectors: Sequence[FeatureVector]) -> dict:
    """Mean, sample sd, min, max per measure plus the Pearson correlation matrix.

    Correlations involving a constant measure are ``None``.
    """
    if not vectors:
        raise ValueError("no feature vectors to summarise")
    data = np.array([fv.measures() for fv in vectors], dtype=np.float64)
    n = data.shape[0]
    stats = {}
    for j, m in enumerate(MEASURES):
        col = data[:, j]
        stats[m] = {
            "mean": float(col.mean()),
            "sd": float(col.std(ddof=1)) if n > 1 else 0.0,
            "min": float(col.min()),
            "max": float(col.max()),
        }
    centred = data - data.mean(axis=0)
    norms = np.sqrt((centred**2).sum(axis=0))
    corr: list[list[float | None]] = []
    for i in range(len(MEASURES)):
        row = []
        for j in range(len(MEASURES)):
            if norms[i] == 0 or norms[j] == 0:
                row.append(None)
            elif i == j:
                row.append(1.0)
            else:
                r = float(centred[:, i] @ centred[:, j] / (norms[i] * norms[j]))
                row.append(max(-1.0, min(1.0, r)))
        corr.append(row)
    return {"n": n, "measures": list(MEASURES), "statistics": stats, "correlation": corr}


def summary_table(summary: Mapping) -> str:
    names = [f"V_{m}" for m in summary["measures"]]
    w = 12
    lines = [f"Observations: {summary['n']}", ""]
    lines.append("Measure".ljust(10) + "".join(h.rjust(w) for h in ("Mean", "Std. Dev.", "Min", "Max")))
    for m, name in zip(summary["measures"], names):
        s = summary["statistics"][m]
        lines.append(name.ljust(10) + "".join(sig4(s[k]).rjust(w) for k in ("mean", "sd", "min", "max")))
    lines.append("")
    lines.append("Correlation".ljust(10) + "".join(n.rjust(w) for n in names))
    for i, name in enumerate(names):
        cells = []
        for j in range(i + 1):
            r = summary["correlation"][i][j]
            cells.append(("n/a" if r is None else f"{r:.3f}").rjust(w))
        lines.append(name.ljust(10) + "".join(cells))
    return "\n".join(lines) + "\n"


# -- comparisons ------------------------------------------------------------


def contribution_table(contributions: Mapping[str, float], ratio: float, a_id: str = "A", b_id: str = "B") -> str:
    w = max(len(c) for c in contributions) if contributions else 10
    lines = [f"Log-price contributions, {a_id} relative to {b_id}"]
    for col in INFO_COLUMNS:
        if col in contributions:
            lines.append(f"  {col.ljust(w)}  {contributions[col]:+.6f}")
    lines.append(f"  {'Total'.ljust(w)}  {sum(contributions.values()):+.6f}")
    lines.append(f"Price ratio {a_id}/{b_id}: {ratio:.6g}")
    return "\n".join(lines) + "\n"


def hypothesis_table(reports: Sequence[TermReport]) -> str:
    w = max(len(r.column) for r in reports)
    lines = [f"{'Term'.ljust(w)}  {'Coef':>10}  {'SE':>10}  {'p':>8}  expected  verdict"]
    for r in reports:
        verdict = "supported" if r.sign_as_expected and r.stars else ("sign ok" if r.sign_as_expected else "contrary")
        lines.append(
            f"{r.column.ljust(w)}  {sig4(r.coefficient):>10}  {sig4(r.std_error):>10}  "
            f"{r.p_value:8.4f}  {'+' if r.expected_sign > 0 else '-':>8}  {verdict}{' ' + r.stars if r.stars else ''}"
        )
    return "\n".join(lines) + "\n"
