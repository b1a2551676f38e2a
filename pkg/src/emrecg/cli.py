"""Command-line entry point: ingest, trace, embed, featurize, train, evaluate, ablate, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .common_ground import CommonGroundError
from .dataset import DatasetError, ValidationError, write_dataset
from .embeddings import EmbeddingError
from .evaluation import (
    QUINTILE_RULES,
    TABLE_PRESETS,
    TABLE_TITLES,
    EvaluationError,
    ResultsTable,
    report,
)
from .features import AblationSpec, ConfigError, FeatureError, Group, write_matrix_csv, write_schema_json
from .logic import FormulaError
from .mlp import ModelFormatError, NumericalError
from .parser import ParserError, build_lexicon, parse_re, resolve, scene_from_coordinates, to_logical_form
from .pipeline import Pipeline, PipelineConfig, dataset_summary
from .synthetic import generate_dataset
from .trace import trace_record

log = logging.getLogger("emrecg")

COMMANDS = ("ingest", "trace", "cg", "embed", "featurize", "train", "evaluate", "ablate", "report",
            "parse", "synth")


SUBSETS = {"all": "all", "language": "language_only", "language_only": "language_only",
           "ensemble": "ensemble_only", "ensemble_only": "ensemble_only"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2; usage errors are exit 1
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset CSV/JSON export, or synthetic[:N]")
    p.add_argument("--mapping", help="column mapping JSON for the dataset export")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", help="output directory (default emrecg-out)")
    p.add_argument("--epochs", type=int, help="MLP training epochs")
    p.add_argument("--batch", type=int, help="MLP minibatch size")
    p.add_argument("--sg-epochs", type=int, help="Skip-Gram epochs")
    p.add_argument("--rule", choices=QUINTILE_RULES, help="quintile scoring rule")
    p.add_argument("-v", "--verbose", action="store_true")


def _spec_args(p: argparse.ArgumentParser, default_groups: str = "raw,formal") -> None:
    p.add_argument("--groups", default=default_groups, help="comma list of raw, formal, embedding (or se)")
    p.add_argument("--subset", default="all", choices=tuple(SUBSETS))
    p.add_argument("--dependence", default="all", choices=("all", "linguistic_only"))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="emrecg", description=__doc__)
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="load and validate a dataset export")
    _common(p)

    p = sub.add_parser("trace", help="common-ground update trace for one record")
    _common(p)
    p.add_argument("record", help="video id")
    cg = sub.add_parser("cg", help="common-ground tools")
    cg_sub = cg.add_subparsers(dest="cg_command", metavar="CMD", parser_class=_Parser)
    cg_sub.required = True
    p = cg_sub.add_parser("trace", help="same as the top-level trace command")
    _common(p)
    p.add_argument("record", help="video id")

    p = sub.add_parser("embed", help="train Skip-Gram word vectors")
    _common(p)
    p.add_argument("action", nargs="?", default="train", choices=("train",))

    p = sub.add_parser("featurize", help="write a feature matrix and its schema")
    _common(p)
    _spec_args(p)

    p = sub.add_parser("train", help="fit one model on every judgment")
    _common(p)
    _spec_args(p)

    p = sub.add_parser("evaluate", help="7-fold cross-validation of one feature configuration")
    _common(p)
    _spec_args(p)

    p = sub.add_parser("ablate", help="run a preset ablation table")
    _common(p)
    p.add_argument("--table", type=int, choices=sorted(TABLE_PRESETS), required=True)

    p = sub.add_parser("report", help="format saved results tables")
    p.add_argument("results", nargs="+", help="results JSON files")
    p.add_argument("--csv", help="also write the combined CSV here")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("parse", help="parse one referring expression")
    _common(p)
    p.add_argument("--utterance", required=True)
    p.add_argument("--record", help="resolve relata against this video's scene")

    p = sub.add_parser("synth", help="write a synthetic dataset export")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV or TSV path")
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.data is not None:
        cfg = replace(cfg, data=args.data)
    if args.mapping is not None:
        cfg = replace(cfg, mapping=args.mapping)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    try:
        if args.epochs is not None:
            cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
        if args.batch is not None:
            cfg = replace(cfg, train=replace(cfg.train, batch_size=args.batch))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if args.sg_epochs is not None:
        cfg = replace(cfg, embedding=replace(cfg.embedding, epochs=args.sg_epochs))
    if args.rule is not None:
        cfg = replace(cfg, rule=args.rule)
    return cfg


def _spec(args: argparse.Namespace) -> AblationSpec:
    groups = [g.strip() for g in args.groups.split(",") if g.strip()]
    try:
        return AblationSpec(frozenset(groups), SUBSETS[args.subset], args.dependence)
    except ValueError:
        raise ConfigError(f"bad --groups {args.groups!r}; use raw, formal, embedding") from None


def _record(ds, video_id: str):
    try:
        return ds.by_id(video_id)
    except KeyError:
        raise ConfigError(f"no record with video_id {video_id!r}") from None


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _run(args: argparse.Namespace, argv: Sequence[str]) -> int:
    cmd = args.command
    if cmd == "synth":
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_dataset(generate_dataset(args.n, args.seed), out)
        print(out)
        return 0
    if cmd == "report":
        tables = [ResultsTable.load(p) for p in args.results]
        merged = ResultsTable(tuple(r for t in tables for r in t.rows), tables[0].config if tables else {})
        rep = report(merged)
        sys.stdout.write(rep.text)
        if args.csv:
            Path(args.csv).write_text(rep.csv, encoding="utf-8")
        return 0

    cfg = _config(args)
    pipe = Pipeline(cfg)
    extra: dict = {}

    if cmd == "ingest":
        summary = dataset_summary(pipe.dataset())
        pipe.out.mkdir(parents=True, exist_ok=True)
        path = pipe.out / "dataset_summary.json"
        path.write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
        pipe.record(path)
        print(f"{summary['records']} records, {len(summary['violations'])} violations")
    elif cmd in ("trace", "cg"):
        ds = pipe.dataset()
        rec = _record(ds, args.record)
        tr = trace_record(rec, build_lexicon(ds))
        d = tr.to_json()
        path = pipe.out / "trace" / f"{rec.video_id}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(d, indent=2, sort_keys=True), encoding="utf-8")
        pipe.record(path)
        _emit(d)
    elif cmd == "embed":
        wv = pipe.word_vectors()
        hist = wv.training_meta.get("loss_history", [])
        print(f"{len(wv.vocabulary)} words x {wv.dim} dims"
              + (f", final loss {hist[-1]:.4f}" if hist else ""))
    elif cmd == "featurize":
        spec = _spec(args)
        fz = pipe.featurizer(Group.EMBEDDING in spec.groups)
        recs = fz.records_for(spec.modality_subset)
        x, schema = fz.matrix(spec, recs)
        pipe.out.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(pipe.out / "features.csv", [r.video_id for r in recs], x, schema)
        write_schema_json(pipe.out / "schema.json", schema)
        pipe.record(pipe.out / "features.csv")
        pipe.record(pipe.out / "schema.json")
        extra["spec"] = spec.to_json()
        print(f"{x.shape[0]} rows x {x.shape[1]} columns")
    elif cmd == "train":
        spec = _spec(args)
        path, hist = pipe.train_full(spec)
        extra["spec"] = spec.to_json()
        print(f"{path}: final loss {hist[-1]:.4f}")
    elif cmd == "evaluate":
        spec = _spec(args)
        table = pipe.ablate([spec], "evaluation")
        extra["spec"] = spec.to_json()
        sys.stdout.write(report(table).text)
    elif cmd == "ablate":
        table = pipe.ablate(TABLE_PRESETS[args.table], f"table{args.table}")
        rep = report(table)
        path = pipe.out / f"table{args.table}.txt"
        path.write_text(f"{TABLE_TITLES[args.table]}\n\n{rep.text}", encoding="utf-8")
        pipe.record(path)
        extra["table"] = args.table
        sys.stdout.write(rep.text)
    elif cmd == "parse":
        ds = pipe.dataset()
        p = parse_re(args.utterance, build_lexicon(ds))
        if args.record:
            rec = _record(ds, args.record)
            p = resolve(p, scene_from_coordinates(rec.object_coordinates), rec.target_object)
        d = p.to_json()
        resolved = all(np_.resolved_entity is not None for np_ in p.relata())
        d["logical_form"] = [str(a) for a in to_logical_form(p)] if resolved else None
        _emit(d)
        return 0
    pipe.write_manifest(cmd, argv, extra)
    return 0


def _fail(kind: str, message: str, **extra) -> None:
    err = {"error": kind, "message": message}
    err.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(err, sort_keys=True), file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        _fail("usage", str(e))
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args, argv)
    except NumericalError as e:
        _fail("numerical", str(e))
        return 2
    except ValidationError as e:
        _fail(type(e).__name__, str(e), record_id=e.record_id)
        return 1
    except (ConfigError, FeatureError, DatasetError, ParserError, CommonGroundError, FormulaError,
            EmbeddingError, EvaluationError, ModelFormatError, FileNotFoundError, json.JSONDecodeError) as e:
        _fail(type(e).__name__, str(e))
        return 1


__all__ = ["COMMANDS", "build_parser", "main"]
