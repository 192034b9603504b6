"""Command-line interface: ``verixanon <command> [options]``.

Exit codes: 0 success (or audit verified), 1 audit found a violation,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

from .adversaries import KINDS, CloudProfile, run_profile
from .anonymizer import CorruptBundle, MalformedTree, read_bundle, write_bundle
from .config import ConfigError, RunConfig
from .dataset import InsufficientRows, ParseError, SchemaMismatch, encode_categoricals, \
    load_csv, load_rename_map, load_schema, schema_to_json
from .experiments import SCHEMA_VERSION, audit_summary, model_params, prepare, run_bench, \
    run_ksweep, run_matrix, verify
from .fingerprint import FeatureMismatch, calibrate_epsilon
from .synthetic import GENERATORS
from .traps import DuplicateTrackerID, TrapManifest, read_outsourced_csv, write_outsourced_csv
from .verifier import VERIFIED

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2
INPUT_ERRORS = (ConfigError, CorruptBundle, SchemaMismatch, ParseError, InsufficientRows, MalformedTree,
                DuplicateTrackerID, FeatureMismatch, OSError, KeyError, ValueError)

SCHEMA_FILE = "schema.json"
MANIFEST_FILE = "manifest.json"
OUTSOURCED_FILE = "outsourced.csv"


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {"seed": args.seed, "k": args.k}
    if getattr(args, "epsilon", None) is not None:
        over.update(epsilon=args.epsilon, calibrate=False)
    if getattr(args, "drop_fraction", None) is not None:
        over["delta"] = args.drop_fraction
    if getattr(args, "blind_seed", None) is not None:
        over["blind_seed"] = args.blind_seed
    return cfg.override(**over)


def _salt() -> bytes:
    hex_salt = os.environ.get("VERIX_SALT_HEX")
    if hex_salt is None:
        return os.urandom(32)
    try:
        return bytes.fromhex(hex_salt)
    except ValueError:
        raise ConfigError("VERIX_SALT_HEX is not valid hex") from None


def _load_table(args, cfg: RunConfig):
    if args.synthetic:
        return GENERATORS[args.synthetic](args.rows or cfg.dataset_rows, cfg.seed)
    if not args.csv or not args.schema:
        raise ConfigError("give --synthetic, or both --csv and --schema")
    schema = load_schema(args.schema)
    return encode_categoricals(load_csv(args.csv, schema, load_rename_map(args.schema)))


def _schema_of(args, default_dir: Path):
    path = Path(args.schema) if args.schema else default_dir / SCHEMA_FILE
    return load_schema(path)


def cmd_prepare(args) -> int:
    cfg = _config(args)
    table = _load_table(args, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        client = prepare(table, cfg, _salt())
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_outsourced_csv(out / OUTSOURCED_FILE, client.outsourced.published())
    client.manifest.save(out / MANIFEST_FILE)
    (out / SCHEMA_FILE).write_text(json.dumps(schema_to_json(table.schema), indent=2) + "\n",
                                   encoding="utf-8")
    _write_json(out / "prepare.json", {"schema_version": SCHEMA_VERSION, "kind": "preparation",
                                       "config": cfg.to_dict(), "summary": client.summary})
    print(json.dumps(client.summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_cloud(args) -> int:
    cfg = _config(args)
    source = Path(args.outsourced)
    published = read_outsourced_csv(source, _schema_of(args, source.parent))
    profile = CloudProfile(args.adversary, cfg.delta, cfg.blind_seed, cfg.seed, cfg.adt_max_depth)
    result = run_profile(published, cfg.k, profile)
    write_bundle(args.out_dir, result)
    print(f"{args.adversary}: {result.anonymized.n_rows} rows, root {result.root_hash}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    manifest_path = Path(args.manifest)
    manifest = TrapManifest.load(manifest_path)
    result = read_bundle(args.bundle, _schema_of(args, manifest_path.parent))
    report = verify(result, manifest, cfg, args.epsilon)
    payload = {"schema_version": SCHEMA_VERSION, "kind": "audit", **audit_summary(report),
               "detail": report.to_dict()}
    if args.out_dir:
        _write_json(Path(args.out_dir) / "audit.json", payload)
    print(json.dumps(audit_summary(report), indent=2, sort_keys=True))
    return EXIT_OK if report.verdict == VERIFIED else EXIT_VIOLATION


def _mark(passed: bool) -> str:
    return "pass" if passed else "FAIL"


def format_matrix(report: dict) -> str:
    lines = [f"{'dataset':<10} {'cloud':<12} {'L1':<5} {'L2a':<5} {'L2b':<5} {'L3':<5} verdict"]
    for name, entry in report["datasets"].items():
        for kind, s in entry["scenarios"].items():
            marks = [_mark(s[layer]["pass"]) for layer in ("layer1", "layer2a", "layer2b", "layer3")]
            lines.append(f"{name:<10} {kind:<12} " + " ".join(f"{m:<5}" for m in marks)
                         + f" {s['verdict']}")
    return "\n".join(lines)


def cmd_matrix(args) -> int:
    cfg = _config(args)
    names = [n for n in args.datasets.split(",") if n]
    unknown = [n for n in names if n not in GENERATORS]
    if unknown:
        raise ConfigError(f"unknown datasets {unknown}; choose from {sorted(GENERATORS)}")
    tables = {n: GENERATORS[n](args.rows or cfg.dataset_rows, cfg.seed) for n in names}
    report, timings = run_matrix(tables, cfg)
    out = Path(args.out_dir)
    _write_json(out / "matrix.json", report)
    _write_json(out / "matrix_timings.json", timings)
    print(format_matrix(report))
    return EXIT_OK


def cmd_ksweep(args) -> int:
    cfg = _config(args)
    table = GENERATORS[args.dataset](args.rows or cfg.ksweep_rows, cfg.seed)
    report = run_ksweep(table, cfg)
    out = Path(args.out_dir)
    _write_json(out / "ksweep.json", report)
    with open(out / "ksweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(report["rows"][0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(report["rows"])
    print(json.dumps(report["summary"], indent=2, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    sizes = [int(float(s)) for s in args.sizes.split(",") if s]
    rows = run_bench(sizes, cfg.k, cfg, args.repeats)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    for r in rows:
        print(f"n={r['n']:>9} hash={r['hash_s']:.3f}s sentinel={r['sentinel_s']:.4f}s "
              f"twin={r['twin_s']:.4f}s xai={r['xai_s']:.3f}s total={r['total_s']:.3f}s")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    table = _load_table(args, cfg)
    eps = calibrate_epsilon(table, cfg.k, cfg.calibration_margin, cfg.seed, cfg.calibration_rows,
                            cfg.shap_subsample, model_params(cfg))
    payload = {"schema_version": SCHEMA_VERSION, "kind": "calibration", "k": cfg.k,
               "margin": cfg.calibration_margin, "rows": cfg.calibration_rows, "epsilon": eps}
    if args.out_dir:
        _write_json(Path(args.out_dir) / "calibration.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--k", type=int)
    common.add_argument("--out-dir", default="out")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--csv", help="input CSV")
    source.add_argument("--schema", help="JSON schema for the CSV")
    source.add_argument("--synthetic", choices=sorted(GENERATORS), help="use a generated dataset")
    source.add_argument("--rows", type=int, help="rows to generate")

    eps = argparse.ArgumentParser(add_help=False)
    eps.add_argument("--epsilon", type=float, help="fixed audit threshold (disables calibration)")

    p = argparse.ArgumentParser(prog="verixanon", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", parents=[common, source, eps],
                       help="plant traps, fingerprint, write outsourced CSV and manifest")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("cloud", parents=[common], help="run a cloud profile on an outsourced CSV")
    s.add_argument("--outsourced", required=True)
    s.add_argument("--schema", help=f"defaults to {SCHEMA_FILE} beside the CSV")
    s.add_argument("--adversary", choices=KINDS, default="honest")
    s.add_argument("--drop-fraction", type=float)
    s.add_argument("--blind-seed", type=int)
    s.set_defaults(func=cmd_cloud)

    s = sub.add_parser("verify", parents=[common, eps], help="audit a result bundle")
    s.add_argument("--bundle", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--schema", help=f"defaults to {SCHEMA_FILE} beside the manifest")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("matrix", parents=[common, eps], help="every dataset x cloud profile")
    s.add_argument("--datasets", default="strong,weak")
    s.add_argument("--rows", type=int)
    s.add_argument("--drop-fraction", type=float)
    s.add_argument("--blind-seed", type=int)
    s.set_defaults(func=cmd_matrix)

    s = sub.add_parser("ksweep", parents=[common], help="utility of target-driven vs blind splits")
    s.add_argument("--dataset", choices=sorted(GENERATORS), default="strong")
    s.add_argument("--rows", type=int)
    s.add_argument("--blind-seed", type=int)
    s.set_defaults(func=cmd_ksweep)

    s = sub.add_parser("bench", parents=[common], help="client verification time by size")
    s.add_argument("--sizes", default="10000,100000,1000000")
    s.add_argument("--repeats", type=int, default=3)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("calibrate", parents=[common, source],
                       help="audit threshold from an honest local run")
    s.set_defaults(func=cmd_calibrate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
