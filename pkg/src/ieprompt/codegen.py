"""Render schemas and documents into the code-style prompt dialect.

Output layout (4-space indent, LF line endings)::

    class Person(Entity):
        \"\"\"Names of people.\"\"\"
        span: str  # The name of the person
        # Examples: "Obama", "Angela Merkel"

    class Location(Entity):
        ...

    text = "Obama visited Paris."

    result = [
        Person(span="Obama"),
    ]

Docstrings that do not fit on one line are greedily word-wrapped between
opening and closing quote lines; blank lines in a guideline separate
paragraphs. String literals are always double-quoted and escape only
backslash, double quote, newline and tab.
"""
from __future__ import annotations

import re
import textwrap
from dataclasses import dataclass, field
from typing import Sequence

from .regularize import RegularizationTrace
from .schema import Annotation, Document, FieldType, LabelDef, TaskSchema, validate_annotation

RESULT_PREFIX = "result = ["
INDENT = "    "


class RenderError(ValueError):
    pass


class InvalidAnnotation(RenderError):
    pass


class UnrenderableValue(RenderError):
    pass


@dataclass(frozen=True)
class RenderOptions:
    include_guidelines: bool = True
    include_candidates: bool = True
    candidates_k: int = 5
    wrap_column: int = 80

    def __post_init__(self):
        if self.candidates_k < 0:
            raise ValueError("candidates_k must be >= 0")
        if self.wrap_column < 40:
            raise ValueError("wrap_column must be >= 40")

    def to_dict(self) -> dict:
        return {
            "include_guidelines": self.include_guidelines,
            "include_candidates": self.include_candidates,
            "candidates_k": self.candidates_k,
            "wrap_column": self.wrap_column,
        }


@dataclass(frozen=True)
class CompiledExample:
    """A rendered example.

    ``prompt`` holds the full text (schema, input text and gold result block);
    ``prompt[split_offset:]`` starts with ``result = [``. Trainers mask the loss
    before ``split_offset``; clients send only :attr:`model_input`.
    """

    doc_id: str
    prompt: str
    result: str
    split_offset: int
    trace: RegularizationTrace = field(default_factory=lambda: RegularizationTrace(0, ()))

    @property
    def model_input(self) -> str:
        return self.prompt[: self.split_offset + len(RESULT_PREFIX)]

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "prompt": self.prompt,
            "result": self.result,
            "split_offset": self.split_offset,
            "trace": self.trace.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CompiledExample":
        return cls(
            doc_id=data["doc_id"],
            prompt=data["prompt"],
            result=data["result"],
            split_offset=data["split_offset"],
            trace=RegularizationTrace.from_dict(data["trace"]),
        )


def quote(value: str) -> str:
    try:
        value.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise UnrenderableValue(f"cannot encode {value!r} as UTF-8") from exc
    escaped = (
        value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    )
    return f'"{escaped}"'


def _docstring_escape(text: str) -> str:
    text = text.replace("\\", "\\\\").replace('"""', '\\"\\"\\"')
    if text.endswith('"'):
        text = text[:-1] + '\\"'
    return text


def render_docstring(guideline: str, wrap_column: int = 80) -> list[str]:
    paragraphs = [
        " ".join(p.split()) for p in re.split(r"\n\s*\n", guideline.strip()) if p.strip()
    ]
    if not paragraphs:
        return []
    paragraphs = [_docstring_escape(p) for p in paragraphs]
    if len(paragraphs) == 1:
        line = f'{INDENT}"""{paragraphs[0]}"""'
        if len(line) <= wrap_column:
            return [line]
    lines = [f'{INDENT}"""']
    width = wrap_column - len(INDENT)
    for n, paragraph in enumerate(paragraphs):
        if n:
            lines.append("")
        wrapped = textwrap.wrap(
            paragraph, width=width, break_long_words=False, break_on_hyphens=False
        )
        lines.extend(INDENT + w for w in wrapped)
    lines.append(f'{INDENT}"""')
    return lines


def render_class(label: LabelDef, opts: RenderOptions) -> str:
    lines = [f"class {label.name}({label.parent}):"]
    if opts.include_guidelines:
        lines.extend(render_docstring(label.guideline, opts.wrap_column))
    for f in label.fields:
        line = f"{INDENT}{f.name}: {f.ftype.type_expr}"
        comment = " ".join(f.comment.split())
        if opts.include_guidelines and comment:
            line += f"  # {comment}"
        lines.append(line)
        if f.ftype is FieldType.SPAN and opts.include_guidelines and opts.include_candidates:
            candidates = label.candidates[: opts.candidates_k]
            if candidates:
                lines.append(f"{INDENT}# Examples: " + ", ".join(quote(c) for c in candidates))
    return "\n".join(lines)


def render_schema(schema: TaskSchema, opts: RenderOptions | None = None) -> str:
    opts = opts or RenderOptions()
    return "\n\n".join(render_class(label, opts) for label in schema.labels)


def render_value(value) -> str:
    if isinstance(value, str):
        return quote(value)
    return "[" + ", ".join(quote(v) for v in value) + "]"


def render_call(ann: Annotation, label: LabelDef) -> str:
    args = [
        f"{f.name}={render_value(ann.values[f.name])}" for f in label.fields if f.name in ann.values
    ]
    return f"{ann.label}({', '.join(args)})"


def render_result_block(annotations: Sequence[Annotation], schema: TaskSchema) -> str:
    if not annotations:
        return "result = []"
    lines = [RESULT_PREFIX]
    for ann in annotations:
        problems = validate_annotation(ann, schema)
        if problems:
            raise InvalidAnnotation("; ".join(str(p) for p in problems))
        lines.append(f"{INDENT}{render_call(ann, schema.label(ann.label))},")
    lines.append("]")
    return "\n".join(lines)


def render_prompt(
    schema: TaskSchema,
    doc: Document,
    opts: RenderOptions | None = None,
    trace: RegularizationTrace | None = None,
) -> CompiledExample:
    opts = opts or RenderOptions()
    if trace is None:
        trace = RegularizationTrace.identity(schema)
    head = render_schema(schema, opts) + "\n\ntext = " + quote(doc.text) + "\n\n"
    result = render_result_block(doc.gold, schema)
    return CompiledExample(
        doc_id=doc.doc_id,
        prompt=head + result + "\n",
        result=result,
        split_offset=len(head),
        trace=trace,
    )
