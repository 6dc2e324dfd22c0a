"""Command-line interface: ``artquant {extract,fit,predict,summary,synth}``.

Tables go to stdout, artifacts to files, diagnostics to stderr.
Exit status is 0 on success, 1 on error and 2 when extraction partly failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .catalog import (
    FeatureCache,
    content_hash,
    extract_all,
    format_features,
    generate_synthetic,
    load_catalog,
    read_features_csv,
)
from .errors import ArtQuantError, ConfigMismatchError, RankDeficiencyError
from .features import FeatureConfig, extract_features
from .hedonic import (
    MEASURES,
    ModelFit,
    ModelSpec,
    build_design_matrix,
    hypothesis_report,
    info_column,
    ols_fit,
    price_contributions,
)
from .raster import decode_image
from .report import contribution_table, fit_table, hypothesis_table, summary_statistics, summary_table

log = logging.getLogger("artquant")

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2
PRESETS = ("attributes", "line-color", "full")


class CliError(Exception):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_manifest(out: Path, command: str, payload: dict, artifacts: Sequence[Path]) -> None:
    digest = hashlib.sha256()
    files = {}
    for p in artifacts:
        h = content_hash(p.read_bytes())
        files[p.name] = h
        digest.update(p.name.encode() + b"\0" + h.encode())
    manifest = {
        "tool": "artquant",
        "version": __version__,
        "command": command,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "artifacts": files,
        "run_hash": digest.hexdigest()[:16],
        **payload,
    }
    (out / "manifest.json").write_text(_dumps(manifest), encoding="utf-8")


def _load_config(path: str | None) -> FeatureConfig:
    if not path:
        return FeatureConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        # A combined run config holds {"features": ..., "model": ...}.
        if isinstance(data, dict) and "features" in data:
            data = data["features"]
        return FeatureConfig.from_dict(data)
    except (OSError, ValueError, TypeError, AttributeError) as exc:
        raise CliError(f"bad feature config {path}: {exc}") from exc


def _load_spec(arg: str) -> ModelSpec:
    if arg in PRESETS:
        return ModelSpec.preset(arg)
    try:
        data = json.loads(Path(arg).read_text(encoding="utf-8"))
        if isinstance(data, dict) and "model" in data:
            data = data["model"]
        spec = ModelSpec.from_dict(data)
    except OSError as exc:
        raise CliError(f"unknown preset or unreadable spec file {arg!r} (presets: {', '.join(PRESETS)})") from exc
    except (ValueError, TypeError, KeyError, AttributeError) as exc:
        raise CliError(f"bad model spec {arg}: {exc}") from exc
    return spec if spec.name else ModelSpec.from_dict({**spec.to_dict(), "name": Path(arg).stem})


def _years(text: str | None) -> tuple[int, int] | None:
    if not text:
        return None
    try:
        lo, hi = (int(p) for p in text.split("-"))
    except ValueError:
        raise CliError(f"--years must look like 2000-2018, got {text!r}") from None
    return lo, hi


# -- subcommands ------------------------------------------------------------


def cmd_extract(args) -> int:
    cfg = _load_config(args.config)
    records = load_catalog(args.catalog, _years(args.years))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache_path = None
    if not args.no_cache:
        cache_path = Path(args.cache) if args.cache else Path(args.catalog).with_name("features_cache.jsonl")
    cache = FeatureCache(cache_path)
    images = args.images if args.images else Path(args.catalog).parent
    result = extract_all(records, cfg, cache, images, workers=args.workers, fail_fast=args.fail_fast)

    features_path = out / "features.csv"
    features_path.write_text(format_features(fv for _, fv in result.results), encoding="utf-8")
    artifacts = [features_path]
    errors_path = out / "errors.csv"
    if result.errors:
        with open(errors_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "image_path", "error"])
            for e in result.errors:
                w.writerow([e.record.id, e.record.image_ref, e.message])
        artifacts.append(errors_path)
        for e in result.errors:
            print(f"warning: {e.record.id}: {e.message}", file=sys.stderr)
    elif errors_path.exists():
        errors_path.unlink()
    _write_manifest(
        out,
        "extract",
        {
            "catalog": {"path": str(args.catalog), "sha256": content_hash(Path(args.catalog).read_bytes())},
            "feature_config": cfg.to_dict(),
            "config_fingerprint": cfg.fingerprint(),
            "counts": {
                "records": len(records),
                "extracted": len(result.results),
                "failed": len(result.errors),
                "computed": result.computed,
                "cache_hits": result.cache_hits,
            },
        },
        artifacts,
    )
    print(f"extracted {len(result.results)} of {len(records)} records "
          f"({result.computed} computed, {result.cache_hits} from cache) -> {features_path}")
    if result.errors:
        print(f"{len(result.errors)} records failed; see {errors_path}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _align(records, features):
    by_id = {fv.source_id: fv for fv in features}
    kept = [r for r in records if r.id in by_id]
    dropped = [r.id for r in records if r.id not in by_id]
    if dropped:
        print(f"warning: {len(dropped)} records without features are left out: {', '.join(dropped[:10])}"
              f"{' ...' if len(dropped) > 10 else ''}", file=sys.stderr)
    stray = set(by_id) - {r.id for r in records}
    if stray:
        print(f"warning: {len(stray)} feature rows match no catalog record", file=sys.stderr)
    fps = {by_id[r.id].config_fingerprint for r in kept}
    if len(fps) > 1:
        raise ConfigMismatchError(f"features were extracted under different configurations: {sorted(fps)}")
    return kept, [by_id[r.id] for r in kept], (fps.pop() if fps else None)


def cmd_fit(args) -> int:
    specs = [_load_spec(s) for s in (args.spec or PRESETS)]
    names = [s.name or f"model{i + 1}" for i, s in enumerate(specs)]
    if len(set(names)) != len(names):
        raise CliError(f"model names must be unique, got {names}")
    records = load_catalog(args.catalog, _years(args.years))
    features = read_features_csv(args.features)
    records, features, fp = _align(records, features)
    if not records:
        raise CliError("no catalog record has extracted features")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fits, artifacts = [], []
    for name, spec in zip(names, specs):
        dm = build_design_matrix(records, features, spec)
        fit = ols_fit(dm, spec, feature_fingerprint=fp)
        fits.append(fit)
        path = out / f"model_{name}.json"
        path.write_text(_dumps(fit.to_dict()), encoding="utf-8")
        artifacts.append(path)
    table = fit_table(fits, [f"({i + 1})" for i in range(len(fits))], expand_controls=args.expand_controls)
    legend = "".join(f"({i + 1}) {n}\n" for i, n in enumerate(names))
    table_path = out / "table.txt"
    table_path.write_text(table + legend, encoding="utf-8")
    artifacts.append(table_path)
    sys.stdout.write(table + legend)
    full = [f for f in fits if all(info_column(m) in f.columns for m in MEASURES)]
    if full:
        sys.stdout.write("\n" + hypothesis_table(hypothesis_report(full[-1])))
    _write_manifest(
        out,
        "fit",
        {
            "catalog": {"path": str(args.catalog), "sha256": content_hash(Path(args.catalog).read_bytes())},
            "features": {"path": str(args.features), "sha256": content_hash(Path(args.features).read_bytes())},
            "feature_fingerprint": fp,
            "models": {n: s.to_dict() for n, s in zip(names, specs)},
        },
        artifacts,
    )
    return EXIT_OK


def _feature_for(arg: str, cfg: FeatureConfig, table: dict | None):
    if table is not None:
        if arg not in table:
            raise CliError(f"no feature row with source id {arg!r}")
        return table[arg]
    try:
        data = Path(arg).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read image {arg}: {exc.strerror or exc}") from exc
    return extract_features(decode_image(data, source_id=Path(arg).name), cfg).with_source(Path(arg).name)


def cmd_predict(args) -> int:
    try:
        fit = ModelFit.from_dict(json.loads(Path(args.model).read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(f"cannot load model {args.model}: {exc}") from exc
    cfg = _load_config(args.config)
    table = None
    if args.features:
        table = {fv.source_id: fv for fv in read_features_csv(args.features)}
    a = _feature_for(args.a, cfg, table)
    b = _feature_for(args.b, cfg, table)
    contributions = price_contributions(fit, a, b)
    ratio = math.exp(sum(contributions.values()))
    sys.stdout.write(contribution_table(contributions, ratio, a.source_id or "A", b.source_id or "B"))
    if args.json:
        Path(args.json).write_text(
            _dumps({"a": a.to_dict(), "b": b.to_dict(), "contributions": contributions, "price_ratio": ratio}),
            encoding="utf-8",
        )
    return EXIT_OK


def cmd_summary(args) -> int:
    features = read_features_csv(args.features)
    if not features:
        raise CliError(f"{args.features} contains no feature rows")
    summary = summary_statistics(features)
    sys.stdout.write(summary_table(summary))
    if args.json:
        Path(args.json).write_text(_dumps(summary), encoding="utf-8")
    return EXIT_OK


def cmd_synth(args) -> int:
    coefs = None
    if args.coeffs:
        try:
            coefs = json.loads(Path(args.coeffs).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read coefficients {args.coeffs}: {exc}") from exc
        if not isinstance(coefs, dict):
            raise CliError("coefficients file must hold a JSON object of column -> value")
    try:
        ds = generate_synthetic(args.seed, args.n, coefs, args.noise, image_size=(args.size, args.size))
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    ds.write(args.out)
    print(f"wrote {args.n} records to {Path(args.out) / 'catalog.csv'} (noise sd {ds.truth['noise_sd']:.4g})")
    return EXIT_OK


# -- wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artquant", description="Information-quantity measures and hedonic price models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", help="compute the five measures for every catalog image")
    e.add_argument("--catalog", required=True)
    e.add_argument("--images", help="directory image paths are relative to (default: catalog directory)")
    e.add_argument("--config", help="feature configuration JSON")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--cache", help="cache file (default: features_cache.jsonl beside the catalog)")
    e.add_argument("--no-cache", action="store_true")
    e.add_argument("--fail-fast", action="store_true")
    e.add_argument("--years", help="sale-year window such as 2000-2018")
    e.set_defaults(func=cmd_extract)

    f = sub.add_parser("fit", help="fit hedonic models")
    f.add_argument("--catalog", required=True)
    f.add_argument("--features", required=True)
    f.add_argument("--spec", action="append", help=f"preset ({', '.join(PRESETS)}) or spec JSON; repeatable")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--expand-controls", action="store_true", help="list every dummy coefficient")
    f.add_argument("--years", help="sale-year window such as 2000-2018")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("predict", help="price ratio between two artworks under a fitted model")
    r.add_argument("--model", required=True)
    r.add_argument("--a", required=True, help="image path, or source id with --features")
    r.add_argument("--b", required=True, help="image path, or source id with --features")
    r.add_argument("--features", help="look A and B up in this features CSV")
    r.add_argument("--config", help="feature configuration JSON for image inputs")
    r.add_argument("--json", help="also write the breakdown here")
    r.set_defaults(func=cmd_predict)

    s = sub.add_parser("summary", help="summary statistics and correlations of the measures")
    s.add_argument("--features", required=True)
    s.add_argument("--json", help="also write the statistics here")
    s.set_defaults(func=cmd_summary)

    y = sub.add_parser("synth", help="generate a synthetic catalog with known coefficients")
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--n", type=int, default=720)
    y.add_argument("--coeffs", help="JSON object of column -> true coefficient")
    y.add_argument("--noise", type=float, help="log-price noise sd (default: calibrated to R^2 0.51)")
    y.add_argument("--size", type=int, default=64, help="image side in pixels")
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except RankDeficiencyError as exc:
        print(f"error: rank-deficient design; dependent columns: {', '.join(exc.columns)}", file=sys.stderr)
    except (ConfigMismatchError, CliError, ArtQuantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
