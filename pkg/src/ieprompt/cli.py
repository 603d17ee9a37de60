"""Command line interface.

Exit codes: 0 success, 1 data errors (invalid schema, rejected records,
malformed inputs), 2 usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .codegen import RenderError, RenderOptions
from .ingest import IngestError, iter_jsonl, write_corpus, write_jsonl
from .ingest import sample as sample_items
from .llmclient import ClientConfig, ConfigError
from .outparse import ParseOutcome, parse_stats
from .pipeline import (
    RunManifest,
    compile_documents,
    default_jobs,
    load_documents,
    parse_generations,
    run,
    score_documents,
    write_report,
)
from .regularize import RegularizationConfig, RegularizationError
from .schema import (
    Annotation,
    Document,
    SchemaFileError,
    load_schema,
    validate_annotation,
    validate_schema,
)
from .score import MatchPolicy, PolicyMismatch, check_policy, load_partitions

logger = logging.getLogger("ieprompt")

DATA_ERRORS = (SchemaFileError, IngestError, RegularizationError, RenderError)
USAGE_ERRORS = (ConfigError, PolicyMismatch, FileNotFoundError, IsADirectoryError, ValueError, KeyError)


class DataError(Exception):
    """Raised by verbs to request exit code 1 after reporting."""


def _tag_map(text: str | None) -> dict[str, str]:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        tag, sep, label = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected TAG=Label, got {item!r}")
        out[tag.strip()] = label.strip()
    return out


def _flatten(config: dict) -> dict:
    flat = {}
    for key, value in config.items():
        if isinstance(value, dict) and key != "tag_map":
            flat.update(_flatten(value))
        else:
            flat[key.replace("-", "_")] = value
    return flat


# -- argument groups -----------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML/JSON file whose keys set option defaults")
    p.add_argument("--report-dir", help="directory for the manifest and versioned report")
    p.add_argument("-v", "--verbose", action="store_true")


def _inputs(p: argparse.ArgumentParser):
    p.add_argument("--schema", required=True, help="schema file")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, help="document files")
    p.add_argument("--format", dest="input_format", choices=["jsonl", "bio"], default="jsonl")
    p.add_argument("--tag-map", type=_tag_map, default={}, help="BIO tag map, e.g. PER=Person,LOC=Location")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=default_jobs(), help="worker processes")


def _render(p: argparse.ArgumentParser):
    p.add_argument("--no-guidelines", dest="include_guidelines", action="store_false",
                   help="render class definitions without docstrings or comments")
    p.add_argument("--no-candidates", dest="include_candidates", action="store_false")
    p.add_argument("--candidates-k", type=int, default=5)
    p.add_argument("--wrap-column", type=int, default=80)


def _regularize(p: argparse.ArgumentParser):
    p.add_argument("--shuffle", action="store_true", help="shuffle class order")
    p.add_argument("--dropout", dest="dropout_p", type=float, default=0.15, help="per-class dropout probability")
    p.add_argument("--paraphrase", action="store_true", help="pick guidelines from the paraphrase pools")
    p.add_argument("--mask", dest="mask_names", type=float, nargs="?", const=0.5, default=False,
                   help="mask class names with LABEL_n for this fraction of examples (default 0.5)")


def _client(p: argparse.ArgumentParser):
    p.add_argument("--base-url", default="")
    p.add_argument("--model", dest="model_name", default="")
    p.add_argument("--api-key-env", default="IEPROMPT_API_KEY")
    p.add_argument("--max-new-tokens", type=int, default=512)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--stop", dest="stop_sequences", action="append", default=None)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--concurrency", type=int, default=4)


def _scoring(p: argparse.ArgumentParser):
    p.add_argument("--policy", default="exact", help="exact, category or partial")
    p.add_argument("--partition", help="dataset name in the partition file (seen/unseen scores)")
    p.add_argument("--partitions", help="partition file; defaults to the packaged one")
    p.add_argument("--arguments", action="store_true", help="score event arguments")
    p.add_argument("--partial", choices=["substring", "jaccard"], default="substring")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ieprompt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check a schema file (and optionally documents)")
    p.add_argument("schema_file")
    p.add_argument("--docs", nargs="*", default=[], help="JSON lines documents to validate")
    _common(p)

    for verb, help_ in (("compile", "render documents into prompts"),
                        ("augment", "render documents with training regularization")):
        p = sub.add_parser(verb, help=help_)
        _inputs(p)
        _render(p)
        if verb == "augment":
            _regularize(p)
        p.add_argument("--out", required=True)
        _common(p)

    p = sub.add_parser("parse", help="parse generations into annotations")
    p.add_argument("--schema", required=True)
    p.add_argument("--in", dest="inputs", required=True, help="JSON lines {doc_id, generation}")
    p.add_argument("--out", required=True)
    p.add_argument("--stats", help="write aggregate parse statistics here")
    p.add_argument("--max-prefix", type=int, default=64)
    _common(p)

    p = sub.add_parser("score", help="score parse outcomes against gold documents")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--schema")
    p.add_argument("--out", help="machine-readable JSON lines report")
    _scoring(p)
    _common(p)

    p = sub.add_parser("stats", help="aggregate parse statistics")
    p.add_argument("--in", dest="inputs", required=True)
    _common(p)

    p = sub.add_parser("sample", help="seeded sample of JSON lines records")
    p.add_argument("--in", dest="inputs", required=True)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("run", help="compile, generate, parse and score in one go")
    p.add_argument("--manifest", help="re-run exactly from a saved run manifest")
    p.add_argument("--schema")
    p.add_argument("--in", dest="inputs", nargs="+")
    p.add_argument("--format", dest="input_format", choices=["jsonl", "bio"], default="jsonl")
    p.add_argument("--tag-map", type=_tag_map, default={})
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.add_argument("--out", help="output directory; each run gets a new subdirectory")
    p.add_argument("--dry-run", action="store_true", help="no network; empty generations")
    p.add_argument("--echo-gold", action="store_true", help="stub model that answers with the gold block")
    p.add_argument("--max-prefix", type=int, default=64)
    _render(p)
    _client(p)
    _scoring(p)
    _common(p)
    return parser


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        with open(known.config, encoding="utf-8") as f:
            config = _flatten(yaml.safe_load(f) or {})
        for sp in parser._subparsers._group_actions[0].choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in config.items() if k in dests})
    return parser.parse_args(argv)


# -- verbs ---------------------------------------------------------------------


def _report_dir(args, out: str | None) -> Path | None:
    if args.report_dir:
        return Path(args.report_dir)
    if out:
        return Path(out).resolve().parent / "reports"
    return None


def _manifest(args) -> dict:
    skip = {"config", "report_dir", "verbose", "verb"}
    data = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        data[key] = value
    return {"verb": args.verb, "args": data}


def _finish(args, out: str | None, report: dict):
    report_dir = _report_dir(args, out)
    if report_dir is not None:
        path = write_report(report_dir, args.verb, _manifest(args), report)
        logger.info("report written to %s", path)


def cmd_validate(args) -> int:
    schema = load_schema(args.schema_file)
    problems = [str(v) for v in validate_schema(schema)]
    for path in args.docs:
        for lineno, record in iter_jsonl(path):
            anns = record.get("annotations", []) if isinstance(record, dict) else []
            for ann in anns:
                try:
                    found = validate_annotation(Annotation.from_dict(ann), schema)
                except ValueError as exc:
                    problems.append(f"{path}:{lineno}: {exc}")
                    continue
                problems.extend(f"{path}:{lineno}: {v}" for v in found)
    for p in problems:
        print(p)
    print(f"{len(problems)} violation(s)")
    _finish(args, None, {"violations": problems})
    return 1 if problems else 0


def cmd_compile(args) -> int:
    schema = load_schema(args.schema)
    _check_schema(schema)
    rejects: list = []
    docs = load_documents(args.inputs, schema, args.input_format, args.tag_map or None, rejects)
    opts = RenderOptions(args.include_guidelines, args.include_candidates, args.candidates_k, args.wrap_column)
    if args.verb == "augment":
        reg = RegularizationConfig(
            shuffle=args.shuffle,
            dropout_p=args.dropout_p,
            paraphrase=args.paraphrase,
            candidates_k=args.candidates_k,
            mask_names=args.mask_names,
            seed=args.seed,
        )
    else:
        reg = RegularizationConfig.identity(seed=args.seed)
    examples = compile_documents(schema, docs, reg, opts, args.jobs)
    n = write_corpus(examples, args.out)
    print(f"{n} example(s) written to {args.out}; {len(rejects)} record(s) rejected")
    _finish(args, args.out, {"examples": n, "rejected": len(rejects),
                             "regularization": reg.to_dict(), "render": opts.to_dict()})
    return 1 if rejects else 0


def _check_schema(schema):
    problems = validate_schema(schema)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        raise DataError(f"{len(problems)} schema violation(s)")


def cmd_parse(args) -> int:
    schema = load_schema(args.schema)
    _check_schema(schema)
    rows = [row for _, row in iter_jsonl(args.inputs)]
    outcomes = parse_generations(rows, schema, args.max_prefix)
    write_jsonl((o.to_dict() for o in outcomes), args.out)
    stats = parse_stats(outcomes).to_dict()
    if args.stats:
        with open(args.stats, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    print(json.dumps(stats, sort_keys=True))
    _finish(args, args.out, stats)
    return 0


def _read_outcomes(path) -> list[ParseOutcome]:
    out = []
    for lineno, row in iter_jsonl(path):
        try:
            out.append(ParseOutcome.from_dict(row))
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"not a parse outcome: {exc}", path, lineno) from None
    return out


def cmd_score(args) -> int:
    policy = MatchPolicy.parse(args.policy)
    rejects: list = []
    if args.schema:
        schema = load_schema(args.schema)
        docs = load_documents([args.gold], schema, rejects=rejects)
    else:
        schema = None
        docs = []
        for lineno, row in iter_jsonl(args.gold):
            try:
                docs.append(Document(row["doc_id"], row.get("text", ""),
                                     [Annotation.from_dict(a) for a in row.get("annotations", [])]))
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"not a document: {exc}", args.gold, lineno) from None
    if schema is not None:
        check_policy(policy, schema.kind)
    if args.arguments and schema is None:
        raise ConfigError("--arguments needs --schema")
    partition = load_partitions(args.partitions)[args.partition] if args.partition else None
    outcomes = _read_outcomes(args.pred)
    report = score_documents(docs, outcomes, policy, schema, arguments=args.arguments,
                             partition=partition, partial=args.partial)
    print(report["_table"])
    if partition is not None:
        print(f"seen F1 {report['seen']['micro']['f1']:.4f}  unseen F1 {report['unseen']['micro']['f1']:.4f}")
    if args.out:
        rows = [{"label": k, **v} for k, v in report["per_label"].items()]
        rows.append({"label": "micro", **report["micro"]})
        for part in ("seen", "unseen"):
            if part in report:
                rows.append({"label": part, **report[part]["micro"]})
        write_jsonl(rows, args.out)
    _finish(args, args.out, report)
    return 1 if rejects else 0


def cmd_stats(args) -> int:
    stats = parse_stats(_read_outcomes(args.inputs)).to_dict()
    for key, value in stats.items():
        print(f"{key:<18} {value}")
    _finish(args, None, stats)
    return 0


def cmd_sample(args) -> int:
    rows = [row for _, row in iter_jsonl(args.inputs)]
    picked = sample_items(rows, args.k, args.seed)
    write_jsonl(picked, args.out)
    print(f"{len(picked)} of {len(rows)} record(s) written to {args.out}")
    _finish(args, args.out, {"sampled": len(picked), "total": len(rows)})
    return 0


def cmd_run(args) -> int:
    if args.manifest:
        manifest = RunManifest.load(args.manifest)
    else:
        if not (args.schema and args.inputs and args.out):
            raise ConfigError("run needs --schema, --in and --out (or --manifest)")
        client = ClientConfig(
            base_url=args.base_url,
            model_name=args.model_name,
            api_key_env=args.api_key_env,
            max_new_tokens=args.max_new_tokens,
            temperature=args.temperature,
            stop_sequences=args.stop_sequences or ("\n]",),
            timeout=args.timeout,
            max_retries=args.max_retries,
            concurrency=args.concurrency,
        )
        if args.arguments and args.policy == "exact":
            args.policy = "partial"
        manifest = RunManifest(
            schema=str(Path(args.schema).resolve()),
            inputs=[str(Path(p).resolve()) for p in args.inputs],
            output_dir=str(Path(args.out).resolve()),
            seed=args.seed,
            input_format=args.input_format,
            tag_map=args.tag_map or {},
            render=RenderOptions(args.include_guidelines, args.include_candidates,
                                 args.candidates_k, args.wrap_column).to_dict(),
            client=client.to_dict(),
            policy=MatchPolicy.parse(args.policy).value,
            partition=args.partition,
            arguments=args.arguments,
            dry_run=args.dry_run,
            echo_gold=args.echo_gold,
            max_prefix=args.max_prefix,
            jobs=args.jobs,
        )
        if not (manifest.dry_run or manifest.echo_gold):
            client.check()
    out = run(manifest)
    with open(out / "score.json", encoding="utf-8") as f:
        report = json.load(f)
    print((out / "score.txt").read_text(encoding="utf-8"), end="")
    print(f"run directory: {out}")
    return 1 if report.get("rejected_records") else 0


VERBS = {
    "validate": cmd_validate,
    "compile": cmd_compile,
    "augment": cmd_compile,
    "parse": cmd_parse,
    "score": cmd_score,
    "stats": cmd_stats,
    "sample": cmd_sample,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return VERBS[args.verb](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
