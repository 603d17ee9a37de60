"""Typed data model for IE task schemas, annotations and documents.

A :class:`TaskSchema` is an ordered tuple of :class:`LabelDef` objects. Each
label becomes one class in the rendered prompt; its guideline becomes the
class docstring and its fields become annotated attributes. Exactly one field
per label is the *span* (the extraction anchor).

Schema files are YAML documents::

    dataset: conll03
    kind: NER
    labels:
      - name: Person
        parent: Entity
        guideline: Names of people, including fictional characters.
        paraphrases: ["Any individual human referred to by name."]
        candidates: ["Obama", "Angela Merkel"]
        fields:
          - {name: span, type: Span, comment: The name of the person}

``fields`` may be omitted for ``Entity`` labels, in which case a single
``span: Span`` field is assumed. Every structural problem is reported with the
line number it occurs on.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Union

import yaml

LABEL_NAME_RE = re.compile(r"[A-Z][A-Za-z0-9]*")
PLACEHOLDER_RE = re.compile(r"LABEL_[1-9][0-9]*")
FIELD_NAME_RE = re.compile(r"[a-z_][a-z0-9_]*")
PARENTS = ("Entity", "Relation", "Event", "Template")


class TaskKind(str, enum.Enum):
    NER = "NER"
    RE = "RE"
    EE = "EE"
    EAE = "EAE"
    SF = "SF"
    CUSTOM = "Custom"


class FieldType(str, enum.Enum):
    SPAN = "Span"
    TEXT = "Text"
    TEXT_LIST = "TextList"
    OPTIONAL_TEXT = "OptionalText"
    OPTIONAL_TEXT_LIST = "OptionalTextList"

    @property
    def optional(self) -> bool:
        return self in (FieldType.OPTIONAL_TEXT, FieldType.OPTIONAL_TEXT_LIST)

    @property
    def is_list(self) -> bool:
        return self in (FieldType.TEXT_LIST, FieldType.OPTIONAL_TEXT_LIST)

    @property
    def type_expr(self) -> str:
        return _TYPE_EXPR[self]


_TYPE_EXPR = {
    FieldType.SPAN: "str",
    FieldType.TEXT: "str",
    FieldType.TEXT_LIST: "List[str]",
    FieldType.OPTIONAL_TEXT: "Optional[str]",
    FieldType.OPTIONAL_TEXT_LIST: "Optional[List[str]]",
}

# A field value is a string or a tuple of strings; an absent optional value is
# represented by leaving the key out of Annotation.values.
FieldValue = Union[str, tuple]


@dataclass(frozen=True)
class FieldDef:
    name: str
    ftype: FieldType
    comment: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ftype", FieldType(self.ftype))


@dataclass(frozen=True)
class LabelDef:
    name: str
    parent: str
    guideline: str = ""
    paraphrases: tuple[str, ...] = ()
    candidates: tuple[str, ...] = ()
    fields: tuple[FieldDef, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "paraphrases", tuple(self.paraphrases))
        # exact duplicates only; "nasa" and "NASA" are different candidates
        object.__setattr__(self, "candidates", tuple(dict.fromkeys(self.candidates)))
        object.__setattr__(self, "fields", tuple(self.fields))

    @property
    def span_field(self) -> FieldDef | None:
        for f in self.fields:
            if f.ftype is FieldType.SPAN:
                return f
        return None

    def field(self, name: str) -> FieldDef | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)


@dataclass(frozen=True)
class TaskSchema:
    dataset_id: str
    kind: TaskKind
    labels: tuple[LabelDef, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def label_names(self) -> tuple[str, ...]:
        return tuple(label.name for label in self.labels)

    def label(self, name: str) -> LabelDef | None:
        for label in self.labels:
            if label.name == name:
                return label
        return None

    def __contains__(self, name: object) -> bool:
        return any(label.name == name for label in self.labels)


@dataclass(frozen=True)
class Annotation:
    """One extracted instance: a label name plus its field values.

    List values are stored as tuples so that annotations compare by value no
    matter whether they were built from lists or tuples. ``None`` values are
    treated as absent and dropped.
    """

    label: str
    values: Mapping[str, FieldValue] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, value in dict(self.values).items():
            if value is None:
                continue
            if isinstance(value, list):
                value = tuple(value)
            clean[key] = value
        object.__setattr__(self, "values", clean)

    def span(self, schema: TaskSchema | None = None) -> str | None:
        """Return the value of the span field.

        Without a schema the field is guessed: ``span``, then ``mention``,
        then the first string value.
        """
        if schema is not None:
            label = schema.label(self.label)
            if label is not None and label.span_field is not None:
                value = self.values.get(label.span_field.name)
                return value if isinstance(value, str) else None
        for key in ("span", "mention"):
            value = self.values.get(key)
            if isinstance(value, str):
                return value
        for value in self.values.values():
            if isinstance(value, str):
                return value
        return None

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "values": {
                k: list(v) if isinstance(v, tuple) else v for k, v in self.values.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Annotation":
        if not isinstance(data, Mapping) or not isinstance(data.get("label"), str):
            raise ValueError(f"annotation must be an object with a string label: {data!r}")
        values = data.get("values", {})
        if not isinstance(values, Mapping):
            raise ValueError(f"annotation values must be an object: {values!r}")
        for key, value in values.items():
            if value is None or isinstance(value, str):
                continue
            if isinstance(value, list) and all(isinstance(v, str) for v in value):
                continue
            raise ValueError(f"field {key!r} must be a string or a list of strings")
        return cls(data["label"], values)


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    gold: tuple[Annotation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gold", tuple(self.gold))

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "text": self.text,
            "annotations": [a.to_dict() for a in self.gold],
        }


@dataclass(frozen=True)
class Violation:
    where: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        text = f"{self.where}: {self.rule}"
        return f"{text} ({self.detail})" if self.detail else text


def is_label_name(name: str) -> bool:
    return bool(LABEL_NAME_RE.fullmatch(name) or PLACEHOLDER_RE.fullmatch(name))


def validate_schema(schema: TaskSchema) -> list[Violation]:
    out: list[Violation] = []
    if not schema.labels:
        out.append(Violation(schema.dataset_id or "<schema>", "no-labels"))
    seen: set[str] = set()
    for label in schema.labels:
        where = label.name or "<unnamed>"
        if not is_label_name(label.name):
            out.append(Violation(where, "bad-label-name", "must match [A-Z][A-Za-z0-9]*"))
        if label.name in seen:
            out.append(Violation(where, "duplicate-label"))
        seen.add(label.name)
        if label.parent not in PARENTS:
            out.append(Violation(where, "bad-parent", f"{label.parent!r} not in {PARENTS}"))
        n_span = sum(f.ftype is FieldType.SPAN for f in label.fields)
        if n_span != 1:
            out.append(Violation(where, "span-count", f"expected 1 Span field, found {n_span}"))
        if label.parent == "Entity" and len(label.fields) != 1:
            out.append(Violation(where, "entity-fields", "Entity labels take exactly one Span field"))
        names: set[str] = set()
        for f in label.fields:
            fwhere = f"{where}.{f.name}"
            if not FIELD_NAME_RE.fullmatch(f.name):
                out.append(Violation(fwhere, "bad-field-name", "must match [a-z_][a-z0-9_]*"))
            if f.name in names:
                out.append(Violation(fwhere, "duplicate-field"))
            names.add(f.name)
    return out


def validate_annotation(ann: Annotation, schema: TaskSchema) -> list[Violation]:
    label = schema.label(ann.label)
    if label is None:
        return [Violation(ann.label, "unknown-label")]
    out = []
    for f in label.fields:
        value = ann.values.get(f.name)
        where = f"{ann.label}.{f.name}"
        if value is None:
            if not f.ftype.optional:
                out.append(Violation(where, "missing-required-field"))
            continue
        if f.ftype.is_list:
            if not (isinstance(value, tuple) and all(isinstance(v, str) for v in value)):
                out.append(Violation(where, "type-mismatch", "expected a list of strings"))
        elif not isinstance(value, str):
            out.append(Violation(where, "type-mismatch", "expected a string"))
    for key in ann.values:
        if label.field(key) is None:
            out.append(Violation(f"{ann.label}.{key}", "extraneous-field"))
    return out


def span_offset(text: str, span: str) -> int | None:
    """Character offset of the first occurrence of ``span`` in ``text``."""
    i = text.find(span)
    return None if i < 0 else i


def check_spans(doc: Document, schema: TaskSchema) -> list[Violation]:
    """Report gold annotations whose span does not occur in the document text."""
    out = []
    for ann in doc.gold:
        span = ann.span(schema)
        if span is not None and span_offset(doc.text, span) is None:
            out.append(Violation(f"{doc.doc_id}:{ann.label}", "span-not-in-text", repr(span)))
    return out


# -- schema files -----------------------------------------------------------


class SchemaFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<string>"):
        self.line = line
        self.source = source
        loc = f"{source}:{line}" if line is not None else source
        super().__init__(f"{loc}: {message}")


def _line(node: yaml.Node) -> int:
    return node.start_mark.line + 1


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, node: yaml.Node, message: str):
        raise SchemaFileError(message, _line(node), self.source)

    def mapping(self, node, what) -> dict[str, yaml.Node]:
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, f"{what} must be a mapping")
        out = {}
        for key, value in node.value:
            if not isinstance(key, yaml.ScalarNode):
                self.fail(key, f"{what}: keys must be plain strings")
            if key.value in out:
                self.fail(key, f"{what}: duplicate key {key.value!r}")
            out[key.value] = value
        return out

    def scalar(self, node, what) -> str:
        if not isinstance(node, yaml.ScalarNode):
            self.fail(node, f"{what} must be a string")
        return node.value

    def strings(self, node, what) -> list[str]:
        if not isinstance(node, yaml.SequenceNode):
            self.fail(node, f"{what} must be a list")
        return [self.scalar(item, f"{what} item") for item in node.value]

    def only(self, node, keys: dict, allowed: set[str], what: str):
        for key in keys:
            if key not in allowed:
                self.fail(node, f"{what}: unknown key {key!r}")

    def field(self, node) -> FieldDef:
        m = self.mapping(node, "field")
        self.only(node, m, {"name", "type", "comment"}, "field")
        for key in ("name", "type"):
            if key not in m:
                self.fail(node, f"field is missing {key!r}")
        ftype = self.scalar(m["type"], "field type")
        try:
            ftype = FieldType(ftype)
        except ValueError:
            self.fail(m["type"], f"unknown field type {ftype!r}")
        comment = self.scalar(m["comment"], "field comment") if "comment" in m else ""
        return FieldDef(self.scalar(m["name"], "field name"), ftype, comment)

    def label(self, node) -> LabelDef:
        m = self.mapping(node, "label")
        allowed = {"name", "parent", "guideline", "paraphrases", "candidates", "fields"}
        self.only(node, m, allowed, "label")
        for key in ("name", "parent"):
            if key not in m:
                self.fail(node, f"label is missing {key!r}")
        parent = self.scalar(m["parent"], "parent")
        if "fields" in m:
            if not isinstance(m["fields"], yaml.SequenceNode):
                self.fail(m["fields"], "fields must be a list")
            fields = [self.field(f) for f in m["fields"].value]
        elif parent == "Entity":
            fields = [FieldDef("span", FieldType.SPAN)]
        else:
            self.fail(node, "label is missing 'fields'")
        return LabelDef(
            name=self.scalar(m["name"], "label name"),
            parent=parent,
            guideline=self.scalar(m["guideline"], "guideline").strip() if "guideline" in m else "",
            paraphrases=[p.strip() for p in self.strings(m["paraphrases"], "paraphrases")]
            if "paraphrases" in m
            else [],
            candidates=self.strings(m["candidates"], "candidates") if "candidates" in m else [],
            fields=fields,
        )

    def schema(self, node) -> TaskSchema:
        m = self.mapping(node, "schema")
        self.only(node, m, {"dataset", "kind", "labels"}, "schema")
        for key in ("dataset", "kind", "labels"):
            if key not in m:
                self.fail(node, f"schema is missing {key!r}")
        kind = self.scalar(m["kind"], "kind")
        try:
            kind = TaskKind(kind)
        except ValueError:
            self.fail(m["kind"], f"unknown task kind {kind!r}")
        if not isinstance(m["labels"], yaml.SequenceNode):
            self.fail(m["labels"], "labels must be a list")
        return TaskSchema(
            self.scalar(m["dataset"], "dataset"),
            kind,
            [self.label(item) for item in m["labels"].value],
        )


def loads_schema(text: str, source: str = "<string>") -> TaskSchema:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise SchemaFileError(str(exc.problem), mark.line + 1 if mark else None, source) from None
    if node is None:
        raise SchemaFileError("empty schema file", None, source)
    return _Reader(source).schema(node)


def load_schema(path: str | Path) -> TaskSchema:
    path = Path(path)
    return loads_schema(path.read_text(encoding="utf-8"), str(path))


def schema_to_dict(schema: TaskSchema) -> dict:
    return {
        "dataset": schema.dataset_id,
        "kind": schema.kind.value,
        "labels": [
            {
                "name": label.name,
                "parent": label.parent,
                "guideline": label.guideline,
                "paraphrases": list(label.paraphrases),
                "candidates": list(label.candidates),
                "fields": [
                    {"name": f.name, "type": f.ftype.value, "comment": f.comment}
                    for f in label.fields
                ],
            }
            for label in schema.labels
        ],
    }


def dumps_schema(schema: TaskSchema) -> str:
    return yaml.safe_dump(schema_to_dict(schema), sort_keys=False, allow_unicode=True)


def labels_of(annotations: Iterable[Annotation]) -> set[str]:
    return {a.label for a in annotations}
