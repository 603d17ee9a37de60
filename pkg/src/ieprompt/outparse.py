"""Safe parser for model-generated result blocks.

The generated text is never executed. A small recursive descent parser reads
a bracketed list of constructor calls with keyword arguments::

    output := "[" (call ("," call)* ","?)? "]"
    call   := IDENT "(" (kwarg ("," kwarg)* ","?)? ")"
    kwarg  := IDENT "=" value
    value  := STRING | NUMBER | list | None | call
    list   := "[" (value ("," value)* ","?)? "]"

Up to ``max_prefix`` characters before the first ``[`` are skipped (so an
echoed ``result = `` is fine) and anything after the closing ``]`` is
ignored. If the list cannot be read completely the whole output counts as
unparseable and yields no annotations.

Calls are then checked against the schema. Undefined classes are dropped and
recorded as hallucinations. Unknown or duplicated keywords are dropped and
counted in ``filtered_fields``. Calls with missing required fields, wrongly
typed values or nested calls are dropped and counted in
``validation_drops``.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable

from .schema import Annotation, TaskSchema, validate_annotation

MAX_PREFIX = 64
MAX_DEPTH = 32

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_ESCAPES = {"\\": "\\", '"': '"', "'": "'", "n": "\n", "t": "\t"}
_WS = " \t\r\n\f\v"


class ParseStatus(str, enum.Enum):
    OK = "Ok"
    UNPARSEABLE = "Unparseable"


@dataclass
class ParseOutcome:
    status: ParseStatus
    annotations: list[Annotation] = field(default_factory=list)
    hallucinated_labels: list[str] = field(default_factory=list)
    filtered_fields: int = 0
    validation_drops: int = 0
    raw: str = ""
    doc_id: str | None = None
    error: str | None = None

    @property
    def hallucinations(self) -> int:
        return len(self.hallucinated_labels)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "status": self.status.value,
            "annotations": [a.to_dict() for a in self.annotations],
            "hallucinations": self.hallucinations,
            "hallucinated_labels": list(self.hallucinated_labels),
            "filtered_fields": self.filtered_fields,
            "validation_drops": self.validation_drops,
            "error": self.error,
            "raw": self.raw,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParseOutcome":
        return cls(
            status=ParseStatus(data["status"]),
            annotations=[Annotation.from_dict(a) for a in data.get("annotations", [])],
            hallucinated_labels=list(data.get("hallucinated_labels", [])),
            filtered_fields=data.get("filtered_fields", 0),
            validation_drops=data.get("validation_drops", 0),
            raw=data.get("raw", ""),
            doc_id=data.get("doc_id"),
            error=data.get("error"),
        )


class _Fail(Exception):
    pass


@dataclass
class _Call:
    name: str
    kwargs: list[tuple[str, object]]


class _Number(str):
    pass


_NONE = object()


class _Reader:
    def __init__(self, text: str, pos: int):
        self.text = text
        self.pos = pos
        self.depth = 0

    def fail(self, what: str):
        raise _Fail(f"{what} at offset {self.pos}")

    def ws(self):
        n = len(self.text)
        while self.pos < n and self.text[self.pos] in _WS:
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        self.ws()
        if self.peek() != ch:
            self.fail(f"expected {ch!r}")
        self.pos += 1

    def ident(self) -> str:
        self.ws()
        m = _IDENT.match(self.text, self.pos)
        if not m:
            self.fail("expected identifier")
        self.pos = m.end()
        return m.group()

    def sequence(self, close: str, item) -> list:
        """Items separated by commas up to ``close``; the opener is consumed."""
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.fail("nesting too deep")
        items = []
        self.ws()
        if self.peek() == close:
            self.pos += 1
            self.depth -= 1
            return items
        while True:
            items.append(item())
            self.ws()
            ch = self.peek()
            if ch == ",":
                self.pos += 1
                self.ws()
                if self.peek() == close:
                    self.pos += 1
                    break
            elif ch == close:
                self.pos += 1
                break
            else:
                self.fail(f"expected ',' or {close!r}")
        self.depth -= 1
        return items

    def output(self) -> list[_Call]:
        self.expect("[")
        return self.sequence("]", self.call)

    def call(self, name: str | None = None) -> _Call:
        if name is None:
            name = self.ident()
        self.expect("(")
        return _Call(name, self.sequence(")", self.kwarg))

    def kwarg(self) -> tuple[str, object]:
        name = self.ident()
        self.expect("=")
        return name, self.value()

    def value(self):
        self.ws()
        ch = self.peek()
        if ch in ('"', "'"):
            return self.string(ch)
        if ch == "[":
            self.pos += 1
            return self.sequence("]", self.value)
        m = _NUMBER.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return _Number(m.group())
        m = _IDENT.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            if m.group() == "None":
                return _NONE
            self.ws()
            if self.peek() == "(":
                return self.call(m.group())
            self.fail(f"bare name {m.group()!r}")
        self.fail("expected a value")

    def string(self, quote_char: str) -> str:
        self.pos += 1
        out = []
        text, n = self.text, len(self.text)
        while True:
            if self.pos >= n:
                self.fail("unterminated string")
            ch = text[self.pos]
            if ch == quote_char:
                self.pos += 1
                return "".join(out)
            if ch == "\n":
                self.fail("newline in string")
            if ch == "\\":
                if self.pos + 1 >= n:
                    self.fail("unterminated string")
                nxt = text[self.pos + 1]
                out.append(_ESCAPES.get(nxt, "\\" + nxt))
                self.pos += 2
                continue
            out.append(ch)
            self.pos += 1


def read_calls(text: str, max_prefix: int = MAX_PREFIX) -> list[_Call]:
    """Syntactic pass only; raises ``ValueError`` on grammar failure."""
    start = text.find("[", 0, max_prefix + 1)
    if start < 0:
        raise ValueError(f"no '[' within the first {max_prefix} characters")
    try:
        return _Reader(text, start).output()
    except _Fail as exc:
        raise ValueError(str(exc)) from None


class _Drop(Exception):
    pass


def _convert(value, is_list: bool):
    if value is _NONE:
        return None
    if isinstance(value, _Call):
        raise _Drop("nested call")
    if is_list:
        if not isinstance(value, list):
            raise _Drop("expected a list")
        items = []
        for item in value:
            if not isinstance(item, str):
                raise _Drop("list items must be strings")
            items.append(str(item))
        return tuple(items)
    if not isinstance(value, str):
        raise _Drop("expected a string")
    return str(value)


def parse_result(
    text: str, schema: TaskSchema, *, max_prefix: int = MAX_PREFIX, doc_id: str | None = None
) -> ParseOutcome:
    try:
        calls = read_calls(text, max_prefix)
    except ValueError as exc:
        return ParseOutcome(ParseStatus.UNPARSEABLE, raw=text, doc_id=doc_id, error=str(exc))

    out = ParseOutcome(ParseStatus.OK, raw=text, doc_id=doc_id)
    for call in calls:
        label = schema.label(call.name)
        if label is None:
            out.hallucinated_labels.append(call.name)
            continue
        raw_values: dict[str, object] = {}
        for name, value in call.kwargs:
            if name in raw_values:
                out.filtered_fields += 1
            raw_values[name] = value
        values = {}
        try:
            for name, value in raw_values.items():
                fdef = label.field(name)
                if fdef is None:
                    out.filtered_fields += 1
                    continue
                values[name] = _convert(value, fdef.ftype.is_list)
            ann = Annotation(call.name, values)
            if validate_annotation(ann, schema):
                raise _Drop("invalid annotation")
        except _Drop:
            out.validation_drops += 1
            continue
        out.annotations.append(ann)
    return out


@dataclass
class ParseStats:
    n: int = 0
    unparseable: int = 0
    hallucinations: int = 0
    filtered_fields: int = 0
    validation_drops: int = 0
    annotations: int = 0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "unparseable": self.unparseable,
            "hallucinations": self.hallucinations,
            "filtered_fields": self.filtered_fields,
            "validation_drops": self.validation_drops,
            "annotations": self.annotations,
        }


def parse_stats(outcomes: Iterable[ParseOutcome]) -> ParseStats:
    stats = ParseStats()
    for o in outcomes:
        stats.n += 1
        stats.unparseable += o.status is ParseStatus.UNPARSEABLE
        stats.hallucinations += o.hallucinations
        stats.filtered_fields += o.filtered_fields
        stats.validation_drops += o.validation_drops
        stats.annotations += len(o.annotations)
    return stats
