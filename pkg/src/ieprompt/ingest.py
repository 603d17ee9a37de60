"""Dataset loaders and compiled-corpus persistence.

Documents come from token-per-line BIO files (NER) or from JSON lines of the
form ``{"doc_id": ..., "text": ..., "annotations": [{"label": ..., "values":
{...}}]}``. Compiled corpora are JSON lines, one :class:`CorpusRecord` per
line, UTF-8 with LF endings.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TypeVar

from .codegen import CompiledExample
from .regularize import PortableRNG
from .schema import Annotation, Document, TaskSchema, check_spans, validate_annotation

logger = logging.getLogger(__name__)

CorpusRecord = CompiledExample
T = TypeVar("T")


class IngestError(ValueError):
    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(loc + message)


class UnknownTag(IngestError):
    pass


class MalformedLine(IngestError):
    pass


class JsonlSyntaxError(IngestError):
    pass


# -- BIO --------------------------------------------------------------------


def bio_spans(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    """``(start, end, type)`` token spans, end exclusive.

    An ``I-`` tag continues a span only when it follows a tag of the same
    type; otherwise it opens a new span (IOB2 repair).
    """
    spans = []
    start, kind = None, None
    for i, tag in enumerate(tags):
        if tag == "O":
            if start is not None:
                spans.append((start, i, kind))
            start, kind = None, None
            continue
        prefix, _, suffix = tag.partition("-")
        if prefix == "I" and start is not None and kind == suffix:
            continue
        if start is not None:
            spans.append((start, i, kind))
        start, kind = i, suffix
    if start is not None:
        spans.append((start, len(tags), kind))
    return spans


def read_bio(path: str | Path, columns: int | None = None) -> list[list[tuple[str, str, int]]]:
    """Sentences as lists of ``(token, tag, line_number)``.

    The token is the first column and the tag the last. ``-DOCSTART-`` lines
    are skipped. With ``columns=None`` the column count is taken from the first
    token line and enforced on the rest.
    """
    sentences, current = [], []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                if current:
                    sentences.append(current)
                    current = []
                continue
            parts = line.split()
            if parts[0] == "-DOCSTART-":
                continue
            if columns is None:
                columns = len(parts)
            if len(parts) != columns or columns < 2:
                raise MalformedLine(
                    f"expected {columns} columns, found {len(parts)}", path, lineno
                )
            tag = parts[-1]
            if tag != "O" and (len(tag) < 3 or tag[:2] not in ("B-", "I-")):
                raise UnknownTag(f"malformed tag {tag!r}", path, lineno)
            current.append((parts[0], tag, lineno))
    if current:
        sentences.append(current)
    return sentences


def load_bio(
    path: str | Path,
    schema: TaskSchema,
    tag_map: dict[str, str] | None = None,
    *,
    columns: int | None = None,
) -> list[Document]:
    """Load a BIO file; ``tag_map`` maps tag suffixes (``PER``) to label names."""
    path = Path(path)
    if tag_map is None:
        tag_map = {name: name for name in schema.label_names}
    for label in tag_map.values():
        if schema.label(label) is None or schema.label(label).span_field is None:
            raise ValueError(f"tag map target {label!r} is not a label with a span field")
    docs = []
    for n, sentence in enumerate(read_bio(path, columns)):
        tokens = [tok for tok, _, _ in sentence]
        tags = [tag for _, tag, _ in sentence]
        for _, tag, lineno in sentence:
            if tag != "O" and tag[2:] not in tag_map:
                raise UnknownTag(f"tag {tag!r} has no label mapping", path, lineno)
        gold = []
        for start, end, kind in bio_spans(tags):
            label = schema.label(tag_map[kind])
            gold.append(Annotation(label.name, {label.span_field.name: " ".join(tokens[start:end])}))
        docs.append(Document(f"{path.stem}-{n}", " ".join(tokens), gold))
    return docs


# -- JSON lines ---------------------------------------------------------------


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, object]]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonlSyntaxError(exc.msg, path, lineno) from None


def write_jsonl(rows: Iterable[dict], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count


def rejects_path_for(path: str | Path) -> Path:
    return Path(path).with_suffix(".rejects.jsonl")


def _document(record: object, schema: TaskSchema, spans: str) -> tuple[Document | None, list[str]]:
    if not isinstance(record, dict):
        return None, ["record is not an object"]
    if not isinstance(record.get("doc_id"), str) or not isinstance(record.get("text"), str):
        return None, ["record needs string 'doc_id' and 'text'"]
    anns = record.get("annotations", [])
    if not isinstance(anns, list):
        return None, ["'annotations' must be a list"]
    problems, gold = [], []
    for item in anns:
        try:
            ann = Annotation.from_dict(item)
        except ValueError as exc:
            problems.append(str(exc))
            continue
        problems.extend(str(v) for v in validate_annotation(ann, schema))
        gold.append(ann)
    if problems:
        return None, problems
    doc = Document(record["doc_id"], record["text"], gold)
    span_problems = [str(v) for v in check_spans(doc, schema)]
    if span_problems:
        if spans == "reject":
            return None, span_problems
        for p in span_problems:
            logger.warning("%s", p)
    return doc, []


def load_jsonl(
    path: str | Path,
    schema: TaskSchema,
    *,
    rejects: list | None = None,
    write_rejects: bool = True,
    spans: str = "reject",
) -> list[Document]:
    """Load documents, routing invalid records to ``<input>.rejects.jsonl``.

    ``spans="warn"`` keeps documents whose gold spans are missing from the text
    and only logs a warning.
    """
    docs, bad = [], []
    for lineno, record in iter_jsonl(path):
        doc, problems = _document(record, schema, spans)
        if doc is None:
            bad.append({"line": lineno, "violations": problems, "record": record})
        else:
            docs.append(doc)
    if bad:
        logger.warning("%s: %d record(s) rejected", path, len(bad))
        if write_rejects:
            write_jsonl(bad, rejects_path_for(path))
    if rejects is not None:
        rejects.extend(bad)
    return docs


def write_documents(docs: Iterable[Document], path: str | Path) -> int:
    return write_jsonl((d.to_dict() for d in docs), path)


def write_corpus(records: Iterable[CorpusRecord], path: str | Path) -> int:
    return write_jsonl((r.to_dict() for r in records), path)


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    out = []
    for lineno, row in iter_jsonl(path):
        try:
            out.append(CorpusRecord.from_dict(row))
        except (KeyError, TypeError) as exc:
            raise JsonlSyntaxError(f"not a corpus record: {exc}", path, lineno) from None
    return out


def sample(items: Sequence[T], k: int, seed: int) -> list[T]:
    """``k`` items drawn without replacement, returned in their original order."""
    picks = PortableRNG(seed).sample_indices(len(items), k)
    return [items[i] for i in sorted(picks)]
