"""End-to-end glue: compile, generate, parse and score over whole corpora."""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .codegen import CompiledExample, RenderOptions, render_prompt
from .ingest import load_bio, load_jsonl, write_corpus, write_jsonl
from .llmclient import ClientConfig, echo_gold, generate
from .outparse import ParseOutcome, parse_result, parse_stats
from .regularize import RegularizationConfig, apply, derive_seed, unmask
from .schema import Document, TaskSchema, load_schema
from .score import (
    LabelPartition,
    MatchPolicy,
    ScoreReport,
    format_report,
    load_partitions,
    score,
    score_arguments,
    score_partitioned,
)

PARALLEL_THRESHOLD = 256


def _compile_one(args) -> CompiledExample:
    schema, doc, index, config, opts = args
    cfg = replace(config, seed=derive_seed(config.seed, index))
    schema2, gold2, trace = apply(schema, doc.gold, cfg)
    return render_prompt(schema2, replace(doc, gold=gold2), opts, trace)


def compile_documents(
    schema: TaskSchema,
    docs: Sequence[Document],
    config: RegularizationConfig,
    opts: RenderOptions,
    jobs: int = 1,
) -> list[CompiledExample]:
    """Regularize and render every document with a per-document derived seed."""
    work = [(schema, doc, i, config, opts) for i, doc in enumerate(docs)]
    if jobs <= 1 or len(work) < PARALLEL_THRESHOLD:
        return [_compile_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_compile_one, work, chunksize=64))


def parse_generations(
    rows: Sequence[dict], schema: TaskSchema, max_prefix: int = 64
) -> list[ParseOutcome]:
    return [
        parse_result(row.get("generation") or "", schema, max_prefix=max_prefix, doc_id=row.get("doc_id"))
        for row in rows
    ]


def score_documents(
    docs: Sequence[Document],
    outcomes: Sequence[ParseOutcome],
    policy: MatchPolicy,
    schema: TaskSchema | None = None,
    *,
    arguments: bool = False,
    partition: LabelPartition | None = None,
    partial: str = "substring",
) -> dict:
    """Corpus report; predictions are paired with documents by ``doc_id``."""
    by_id = {o.doc_id: o for o in outcomes}
    total = ScoreReport()
    seen, unseen = ScoreReport(), ScoreReport()
    for doc in docs:
        outcome = by_id.get(doc.doc_id)
        pred = outcome.annotations if outcome else []
        if arguments:
            total = total + score_arguments(doc.gold, pred, schema, policy, partial=partial)
        else:
            total = total + score(doc.gold, pred, policy, schema=schema, partial=partial)
        if partition is not None:
            s, u = score_partitioned(doc.gold, pred, policy, partition, schema=schema, partial=partial)
            seen, unseen = seen + s, unseen + u
    report = {"policy": MatchPolicy(policy).value, "documents": len(docs), **total.to_dict()}
    doc_ids = {d.doc_id for d in docs}
    report["unmatched_predictions"] = sorted(str(o.doc_id) for o in outcomes if o.doc_id not in doc_ids)
    if partition is not None:
        report["seen"] = seen.to_dict()
        report["unseen"] = unseen.to_dict()
    report["_table"] = format_report(total)
    return report


def load_documents(
    paths: Sequence[str | Path],
    schema: TaskSchema,
    fmt: str = "jsonl",
    tag_map: dict[str, str] | None = None,
    rejects: list | None = None,
) -> list[Document]:
    docs = []
    for path in paths:
        if fmt == "bio":
            docs.extend(load_bio(path, schema, tag_map))
        else:
            docs.extend(load_jsonl(path, schema, rejects=rejects))
    return docs


# -- reports and manifests ----------------------------------------------------


def new_run_dir(parent: str | Path, prefix: str) -> Path:
    """A fresh, never-reused directory ``<parent>/<prefix>-<UTC timestamp>[-n]``."""
    parent = Path(parent)
    parent.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    n = 0
    while True:
        path = parent / (f"{prefix}-{stamp}" + (f"-{n}" if n else ""))
        try:
            path.mkdir()
            return path
        except FileExistsError:
            n += 1


def dump_json(data, path: str | Path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def write_report(report_dir: str | Path, verb: str, manifest: dict, report: dict) -> Path:
    out = new_run_dir(report_dir, verb)
    dump_json({"version": __version__, "verb": verb, **manifest}, out / "manifest.json")
    table = report.pop("_table", None)
    dump_json({"version": __version__, "format": 1, **report}, out / "report.json")
    if table:
        (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    return out


@dataclass
class RunManifest:
    schema: str
    inputs: list[str]
    output_dir: str
    seed: int = 0
    input_format: str = "jsonl"
    tag_map: dict[str, str] = field(default_factory=dict)
    regularization: dict = field(default_factory=lambda: RegularizationConfig.identity().to_dict())
    render: dict = field(default_factory=lambda: RenderOptions().to_dict())
    client: dict = field(default_factory=lambda: ClientConfig().to_dict())
    policy: str = MatchPolicy.EXACT.value
    partition: str | None = None
    arguments: bool = False
    dry_run: bool = False
    echo_gold: bool = False
    max_prefix: int = 64
    jobs: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        data.pop("version", None)
        data.pop("verb", None)
        return cls(**data)


def run(manifest: RunManifest) -> Path:
    """compile, generate, parse, score; every artifact lands in a new run directory."""
    schema = load_schema(manifest.schema)
    rejects: list = []
    docs = load_documents(
        manifest.inputs, schema, manifest.input_format, manifest.tag_map or None, rejects
    )
    reg = RegularizationConfig.from_dict({**manifest.regularization, "seed": manifest.seed})
    opts = RenderOptions(**manifest.render)
    client = ClientConfig.from_dict(manifest.client)
    examples = compile_documents(schema, docs, reg, opts, manifest.jobs)

    out = new_run_dir(manifest.output_dir, "run")
    dump_json({"version": __version__, "verb": "run", **manifest.to_dict()}, out / "manifest.json")
    write_corpus(examples, out / "corpus.jsonl")

    if manifest.echo_gold:
        generations = generate(examples, client, responder=echo_gold)
    else:
        generations = generate(examples, client, dry_run=manifest.dry_run)
    write_jsonl((g.to_dict() for g in generations), out / "generations.jsonl")

    # masked or dropped examples are parsed in their own label space, then unmasked
    outcomes = []
    for ex, gen in zip(examples, generations):
        local = _example_schema(schema, ex)
        o = parse_result(gen.generation, local, max_prefix=manifest.max_prefix, doc_id=ex.doc_id)
        if ex.trace.mask_map:
            o.annotations = unmask(o.annotations, ex.trace)
        outcomes.append(o)
    write_jsonl((o.to_dict() for o in outcomes), out / "outcomes.jsonl")
    dump_json(parse_stats(outcomes).to_dict(), out / "parse_stats.json")

    partition = load_partitions()[manifest.partition] if manifest.partition else None
    report = score_documents(
        docs,
        outcomes,
        MatchPolicy(manifest.policy),
        schema,
        arguments=manifest.arguments,
        partition=partition,
    )
    report["rejected_records"] = len(rejects)
    (out / "score.txt").write_text(report.pop("_table") + "\n", encoding="utf-8")
    dump_json({"version": __version__, "format": 1, **report}, out / "score.json")
    return out


def _example_schema(schema: TaskSchema, ex: CompiledExample) -> TaskSchema:
    """The label space an example was rendered with (after dropout and masking)."""
    labels = []
    for i in ex.trace.permutation:
        label = schema.labels[i]
        labels.append(replace(label, name=ex.trace.mask_map.get(label.name, label.name)))
    if not labels:
        return schema
    return replace(schema, labels=labels)


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1
