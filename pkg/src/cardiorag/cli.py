"""Command-line surface for the screening pipeline.

Subcommands: ingest, features, build-db, screen, evaluate. Exit codes:
0 success, 1 IO/transport failure, 2 bad usage or validation, 3 the model
produced no valid structured output (screen only).

Option precedence is flags > environment > config file > defaults; the
optional --config JSON file may carry any long-option name (with dashes
replaced by underscores).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .casedb import CaseDatabase, RetrievalConfig, build_db
from .clinical import extract_features
from .delineate import compute_axis, delineate_qrs
from .encoder import load_weights, random_weights, save_weights
from .errors import CardioRagError, IoFailure, TransportFailure
from .evaluate import (ExperimentConfig, run_experiment, screen_record,
                       write_case_log, write_metrics_csv, write_metrics_json)
from .llm import BackendConfig, Validity
from .prompt import PromptConfig, Variant
from .records import (Label, RecordFormat, Sex, load_record, preprocess,
                      write_atomic, write_internal)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_INVALID_OUTPUT = 3


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise IoFailure(f"config file not found: {p}")
    return json.loads(p.read_text())


def _resolve(args: argparse.Namespace, cfg_file: dict, name: str, default=None):
    """flags > config file > default (env handled by BackendConfig)."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    if name in cfg_file:
        return cfg_file[name]
    return default


def _backend_from_args(args, cfg_file) -> BackendConfig:
    kind = _resolve(args, cfg_file, "llm", "mock")
    overrides = {}
    for key in ("base_url", "model", "api_key"):
        v = _resolve(args, cfg_file, key)
        if v is not None:
            overrides[key] = v
    timeout = _resolve(args, cfg_file, "timeout")
    if timeout is not None:
        overrides["timeout"] = float(timeout)
    conc = _resolve(args, cfg_file, "concurrency")
    if conc is not None:
        overrides["concurrency"] = int(conc)
    if kind == "mock":
        return BackendConfig(kind="mock", **overrides)
    return BackendConfig.from_env(kind="http", **overrides)


def _retrieval_from_args(args, cfg_file, k: int, balanced: bool) -> RetrievalConfig | None:
    if k == 0:
        return None
    return RetrievalConfig(
        k=k,
        pool_m=_resolve(args, cfg_file, "pool_m"),
        w_age=float(_resolve(args, cfg_file, "w_age", 0.3)),
        sigma_age=float(_resolve(args, cfg_file, "sigma_age", 10.0)),
        balanced=balanced,
    )


def _load_corpus_record(args, cfg_file):
    fmt = RecordFormat(_resolve(args, cfg_file, "format", "internal"))
    fs = _resolve(args, cfg_file, "fs")
    rec = load_record(args.record, fmt, fs=float(fs) if fs else None)
    if getattr(args, "record_id", None):
        rec.record_id = args.record_id
    if getattr(args, "age", None) is not None:
        rec.age = float(args.age)
    if getattr(args, "sex", None):
        rec.sex = Sex[args.sex]
    if getattr(args, "label", None):
        rec.label = Label[args.label]
    return rec


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg_file = _load_config_file(args.config)
    rec = _load_corpus_record(args, cfg_file)
    if args.preprocess:
        rec = preprocess(rec)
    write_internal(rec, args.out)
    print(f"wrote {args.out} ({rec.record_id}, {rec.n_samples} samples @ {rec.fs:g} Hz)")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg_file = _load_config_file(args.config)
    rec = preprocess(_load_corpus_record(args, cfg_file))
    measurements = delineate_qrs(rec)
    features = extract_features(rec, hrv_lead=_resolve(args, cfg_file, "hrv_lead", "V5"))
    payload = {
        "record_id": rec.record_id,
        "features": features.to_json_dict(),
        "qrs_axis_deg": compute_axis(measurements),
        "leads": {name: vars(m) for name, m in measurements.items()},
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        write_atomic(args.out, text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_build_db(args) -> int:
    cfg_file = _load_config_file(args.config)
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        print(f"error: corpus directory not found: {corpus_dir}", file=sys.stderr)
        return EXIT_IO
    weights = load_weights(_require_weights(args, cfg_file))
    paths = sorted(corpus_dir.glob("*.cre"))
    records = []
    for p in paths:
        rec = load_record(p, RecordFormat.INTERNAL)
        if not rec.is_preprocessed():
            rec = preprocess(rec)
        records.append(rec)
    db = build_db(records, weights, args.out,
                  hrv_lead=_resolve(args, cfg_file, "hrv_lead", "V5"),
                  w_age=float(_resolve(args, cfg_file, "w_age", 0.3)),
                  sigma_age=float(_resolve(args, cfg_file, "sigma_age", 10.0)))
    print(f"built database at {args.out}: {len(db)} cases, "
          f"{len(db.skipped)} skipped")
    return EXIT_OK


def _require_weights(args, cfg_file) -> str:
    w = _resolve(args, cfg_file, "weights")
    if not w:
        raise SystemExit(EXIT_USAGE)
    return w


def cmd_screen(args) -> int:
    cfg_file = _load_config_file(args.config)
    rec = preprocess(_load_corpus_record(args, cfg_file))

    k = int(_resolve(args, cfg_file, "k", 8))
    retrieval = _retrieval_from_args(args, cfg_file, k, args.balanced)
    db = weights = None
    if retrieval is not None:
        db_path = _resolve(args, cfg_file, "db")
        if not db_path:
            print("error: --db is required unless --k 0", file=sys.stderr)
            return EXIT_USAGE
        db = CaseDatabase.load(db_path)
        weights = load_weights(_require_weights(args, cfg_file))

    cfg = ExperimentConfig(
        prompt=PromptConfig(
            variant=Variant[_resolve(args, cfg_file, "prompt", "P2")],
            char_budget=int(_resolve(args, cfg_file, "char_budget", 4000))),
        retrieval=retrieval,
        backend=_backend_from_args(args, cfg_file),
        hrv_lead=_resolve(args, cfg_file, "hrv_lead", "V5"),
        force_invalid_ids=frozenset([rec.record_id]) if args.force_invalid
        else frozenset(),
    )
    report, cases, _ = screen_record(rec, db, weights, cfg)
    payload = report.to_json_dict()
    payload["record_id"] = rec.record_id
    payload["retrieved_ids"] = [sc.case.record_id for sc in cases]
    text = json.dumps(payload, indent=2)
    if args.out:
        write_atomic(args.out, text + "\n")
    else:
        print(text)
    return EXIT_OK if report.validity is Validity.VALID else EXIT_INVALID_OUTPUT


def cmd_evaluate(args) -> int:
    cfg_file = _load_config_file(args.config)
    manifest = Path(args.manifest)
    if not manifest.exists():
        print(f"error: manifest not found: {manifest}", file=sys.stderr)
        return EXIT_IO
    if manifest.stat().st_size == 0 or not manifest.read_text().strip():
        print("error: manifest is empty", file=sys.stderr)
        return EXIT_USAGE

    variants = [Variant[v.strip()] for v in
                str(_resolve(args, cfg_file, "prompt", "P2")).split(",")]
    ks = [int(v) for v in str(_resolve(args, cfg_file, "k", "8")).split(",")]

    needs_rag = any(k > 0 for k in ks)
    db = weights = None
    if needs_rag:
        db_path = _resolve(args, cfg_file, "db")
        if not db_path:
            print("error: --db is required for k > 0", file=sys.stderr)
            return EXIT_USAGE
        db = CaseDatabase.load(db_path)
        weights = load_weights(_require_weights(args, cfg_file))

    backend = _backend_from_args(args, cfg_file)
    force_ids = frozenset(
        x.strip() for x in (args.force_invalid or "").split(",") if x.strip())

    out_dir = Path(_resolve(args, cfg_file, "out", "eval-out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    reports = []
    for variant in variants:
        for k in ks:
            cfg = ExperimentConfig(
                prompt=PromptConfig(variant=variant, char_budget=int(
                    _resolve(args, cfg_file, "char_budget", 4000))),
                retrieval=_retrieval_from_args(args, cfg_file, k, args.balanced),
                backend=backend,
                hrv_lead=_resolve(args, cfg_file, "hrv_lead", "V5"),
                force_invalid_ids=force_ids,
            )
            report, results = run_experiment(manifest, cfg, db=db, weights=weights)
            reports.append(report)
            slug = report.configuration.replace(" ", "_").replace("=", "")
            write_case_log(results, out_dir / f"cases_{slug}.jsonl")
            print(f"{report.configuration}: acc {report.accuracy}%, "
                  f"recall {report.recall}%, f1 {report.f1}, "
                  f"excluded {report.excluded}")

    write_metrics_json(reports, out_dir / "metrics.json")
    write_metrics_csv(reports, out_dir / "metrics.csv")
    print(f"wrote {out_dir / 'metrics.csv'} ({len(reports)} configurations)")
    return EXIT_OK


def cmd_init_weights(args) -> int:
    # fixed-seed random weights, the documented stand-in when no trained
    # weight file is available yet
    save_weights(random_weights(seed=args.seed), args.out)
    print(f"wrote random weights (seed {args.seed}) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_record_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("record", help="record path")
    p.add_argument("--format", choices=["wfdb", "csv", "internal"])
    p.add_argument("--fs", type=float, help="sampling rate for CSV input")
    p.add_argument("--record-id", dest="record_id")
    p.add_argument("--age", type=float)
    p.add_argument("--sex", choices=[s.name for s in Sex])
    p.add_argument("--label", choices=[l.name for l in Label])


def _add_backend_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--llm", choices=["mock", "http"])
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--model")
    p.add_argument("--api-key", dest="api_key")
    p.add_argument("--timeout", type=float)
    p.add_argument("--concurrency", type=int)


def _add_retrieval_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--db")
    p.add_argument("--weights")
    p.add_argument("--k")
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--pool-m", dest="pool_m", type=int)
    p.add_argument("--w-age", dest="w_age", type=float)
    p.add_argument("--sigma-age", dest="sigma_age", type=float)
    p.add_argument("--prompt")
    p.add_argument("--char-budget", dest="char_budget", type=int)
    p.add_argument("--hrv-lead", dest="hrv_lead")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardiorag",
        description="ECG screening for Chagas disease with case retrieval "
                    "and LLM reasoning")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a record to the internal format")
    _add_record_options(p)
    p.add_argument("--out", required=True)
    p.add_argument("--preprocess", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="print clinical features as JSON")
    _add_record_options(p)
    p.add_argument("--hrv-lead", dest="hrv_lead")
    p.add_argument("--out")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("build-db", help="build a case database from a corpus")
    p.add_argument("corpus", help="directory of internal (.cre) records")
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.add_argument("--hrv-lead", dest="hrv_lead")
    p.add_argument("--w-age", dest="w_age", type=float)
    p.add_argument("--sigma-age", dest="sigma_age", type=float)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("screen", help="diagnose one record")
    _add_record_options(p)
    _add_retrieval_options(p)
    _add_backend_options(p)
    p.add_argument("--out")
    p.add_argument("--force-invalid", action="store_true",
                   help="inject the force-invalid marker (testing)")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("evaluate", help="run a manifest through one or more "
                                        "configurations")
    p.add_argument("manifest")
    _add_retrieval_options(p)
    _add_backend_options(p)
    p.add_argument("--out")
    p.add_argument("--force-invalid",
                   help="comma-separated record ids to force-invalidate")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("init-weights", help="write fixed-seed random weights")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_weights)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (IoFailure, TransportFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CardioRagError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
