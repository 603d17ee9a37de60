"""Span-level micro P/R/F1 with exact, category-only and partial matching."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Iterable, Sequence

import yaml

from .schema import Annotation, TaskKind, TaskSchema


class MatchPolicy(str, enum.Enum):
    EXACT = "ExactSpan"
    CATEGORY = "CategoryOnly"
    PARTIAL = "PartialSpan"

    @classmethod
    def parse(cls, name: str) -> "MatchPolicy":
        aliases = {"exact": cls.EXACT, "category": cls.CATEGORY, "partial": cls.PARTIAL}
        if name.lower() in aliases:
            return aliases[name.lower()]
        return cls(name)


class PolicyMismatch(ValueError):
    pass


EVENT_KINDS = (TaskKind.EE, TaskKind.EAE)


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def prf(tp: int, fp: int, fn: int) -> tuple[Fraction, Fraction, Fraction]:
    p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    f = 2 * p * r / (p + r) if p + r else Fraction(0)
    return p, r, f


@dataclass
class ScoreReport:
    per_label: dict[str, Counts] = field(default_factory=dict)
    uncovered_pred: int = 0
    uncovered_gold: int = 0

    def counts(self, label: str) -> Counts:
        return self.per_label.setdefault(label, Counts())

    @property
    def tp(self) -> int:
        return sum(c.tp for c in self.per_label.values())

    @property
    def fp(self) -> int:
        return sum(c.fp for c in self.per_label.values())

    @property
    def fn(self) -> int:
        return sum(c.fn for c in self.per_label.values())

    @property
    def exact(self) -> tuple[Fraction, Fraction, Fraction]:
        return prf(self.tp, self.fp, self.fn)

    @property
    def precision(self) -> float:
        return float(self.exact[0])

    @property
    def recall(self) -> float:
        return float(self.exact[1])

    @property
    def f1(self) -> float:
        return float(self.exact[2])

    def __add__(self, other: "ScoreReport") -> "ScoreReport":
        merged = {k: Counts() + v for k, v in self.per_label.items()}
        for k, v in other.per_label.items():
            merged[k] = merged.get(k, Counts()) + v
        return ScoreReport(
            merged,
            self.uncovered_pred + other.uncovered_pred,
            self.uncovered_gold + other.uncovered_gold,
        )

    def to_dict(self) -> dict:
        return {
            "micro": {
                "tp": self.tp,
                "fp": self.fp,
                "fn": self.fn,
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
            },
            "per_label": {
                k: {"tp": c.tp, "fp": c.fp, "fn": c.fn, "f1": float(prf(c.tp, c.fp, c.fn)[2])}
                for k, c in sorted(self.per_label.items())
            },
            "uncovered_pred": self.uncovered_pred,
            "uncovered_gold": self.uncovered_gold,
        }


def format_report(report: ScoreReport, title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'Label':<24} {'P':>7} {'R':>7} {'F1':>7} {'TP':>6} {'FP':>6} {'FN':>6}")
    lines.append("-" * 67)
    rows = sorted(report.per_label.items()) + [("micro", Counts(report.tp, report.fp, report.fn))]
    for name, c in rows:
        p, r, f = (float(x) for x in prf(c.tp, c.fp, c.fn))
        lines.append(f"{name:<24} {p:>7.4f} {r:>7.4f} {f:>7.4f} {c.tp:>6} {c.fp:>6} {c.fn:>6}")
    return "\n".join(lines)


def normalize_span(text: str) -> str:
    return " ".join(text.split())


def token_jaccard(a: str, b: str) -> float:
    ta, tb = set(a.split()), set(b.split())
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


@dataclass(frozen=True)
class Matcher:
    policy: MatchPolicy = MatchPolicy.EXACT
    partial: str = "substring"
    jaccard_threshold: float = 0.5

    def strings(self, gold: str | None, pred: str | None) -> bool:
        if self.policy is MatchPolicy.CATEGORY:
            return True
        if gold is None or pred is None:
            return gold is None and pred is None
        g, p = normalize_span(gold), normalize_span(pred)
        if self.policy is MatchPolicy.EXACT:
            return g == p
        if self.partial == "jaccard":
            return token_jaccard(g, p) >= self.jaccard_threshold
        return p in g or g in p


def check_policy(policy: MatchPolicy, kind: TaskKind | None):
    if policy is MatchPolicy.CATEGORY and kind is not None and TaskKind(kind) not in EVENT_KINDS:
        raise PolicyMismatch(f"CategoryOnly matching is only defined for event tasks, not {kind}")


def greedy_pairs(gold: Sequence, pred: Sequence, match) -> list[tuple[int, int]]:
    """One-to-one greedy assignment: each pred in order takes the first free gold."""
    used = [False] * len(gold)
    pairs = []
    for j, p in enumerate(pred):
        for i, g in enumerate(gold):
            if not used[i] and match(g, p):
                used[i] = True
                pairs.append((i, j))
                break
    return pairs


def score(
    gold: Sequence[Annotation],
    pred: Sequence[Annotation],
    policy: MatchPolicy = MatchPolicy.EXACT,
    *,
    schema: TaskSchema | None = None,
    kind: TaskKind | None = None,
    partial: str = "substring",
    jaccard_threshold: float = 0.5,
) -> ScoreReport:
    """Score one document's predictions against its gold annotations."""
    policy = MatchPolicy(policy)
    check_policy(policy, kind if kind is not None else (schema.kind if schema else None))
    matcher = Matcher(policy, partial, jaccard_threshold)

    def match(g: Annotation, p: Annotation) -> bool:
        return g.label == p.label and matcher.strings(g.span(schema), p.span(schema))

    report = ScoreReport()
    for a in gold:
        report.counts(a.label)
    for a in pred:
        report.counts(a.label)
    pairs = greedy_pairs(gold, pred, match)
    matched_gold = {i for i, _ in pairs}
    matched_pred = {j for _, j in pairs}
    for i, _ in pairs:
        report.counts(gold[i].label).tp += 1
    for j, a in enumerate(pred):
        if j not in matched_pred:
            report.counts(a.label).fp += 1
    for i, a in enumerate(gold):
        if i not in matched_gold:
            report.counts(a.label).fn += 1
    return report


def _arguments(ann: Annotation, schema: TaskSchema) -> list[tuple[str, str]]:
    label = schema.label(ann.label)
    span = label.span_field.name if label and label.span_field else None
    out = []
    for name, value in ann.values.items():
        if name == span:
            continue
        for v in (value,) if isinstance(value, str) else value:
            out.append((name, v))
    return out


def score_arguments(
    gold: Sequence[Annotation],
    pred: Sequence[Annotation],
    schema: TaskSchema,
    policy: MatchPolicy = MatchPolicy.PARTIAL,
    *,
    partial: str = "substring",
    jaccard_threshold: float = 0.5,
) -> ScoreReport:
    """Argument-level scores for event annotations.

    Events are first paired one-to-one (same label, triggers matching
    partially). Arguments of a pair are then matched by role and ``policy``.
    Arguments of unpaired events count entirely as false positives or
    negatives. Counts are keyed by event label.
    """
    trigger = Matcher(MatchPolicy.PARTIAL, partial, jaccard_threshold)
    argm = Matcher(MatchPolicy(policy), partial, jaccard_threshold)
    report = ScoreReport()
    for a in (*gold, *pred):
        report.counts(a.label)
    pairs = greedy_pairs(
        gold,
        pred,
        lambda g, p: g.label == p.label and trigger.strings(g.span(schema), p.span(schema)),
    )
    paired_gold = {i for i, _ in pairs}
    paired_pred = {j for _, j in pairs}
    for i, j in pairs:
        g_args, p_args = _arguments(gold[i], schema), _arguments(pred[j], schema)
        arg_pairs = greedy_pairs(
            g_args, p_args, lambda g, p: g[0] == p[0] and argm.strings(g[1], p[1])
        )
        c = report.counts(gold[i].label)
        c.tp += len(arg_pairs)
        c.fp += len(p_args) - len(arg_pairs)
        c.fn += len(g_args) - len(arg_pairs)
    for j, a in enumerate(pred):
        if j not in paired_pred:
            report.counts(a.label).fp += len(_arguments(a, schema))
    for i, a in enumerate(gold):
        if i not in paired_gold:
            report.counts(a.label).fn += len(_arguments(a, schema))
    return report


def score_corpus(
    gold_docs: Iterable[Sequence[Annotation]],
    pred_docs: Iterable[Sequence[Annotation]],
    policy: MatchPolicy = MatchPolicy.EXACT,
    **kwargs,
) -> ScoreReport:
    total = ScoreReport()
    for gold, pred in zip(gold_docs, pred_docs, strict=True):
        total = total + score(gold, pred, policy, **kwargs)
    return total


@dataclass(frozen=True)
class LabelPartition:
    seen: frozenset[str] = frozenset()
    unseen: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "seen", frozenset(self.seen))
        object.__setattr__(self, "unseen", frozenset(self.unseen))
        overlap = self.seen & self.unseen
        if overlap:
            raise ValueError(f"labels both seen and unseen: {sorted(overlap)}")

    @property
    def labels(self) -> frozenset[str]:
        return self.seen | self.unseen


def score_partitioned(
    gold: Sequence[Annotation],
    pred: Sequence[Annotation],
    policy: MatchPolicy,
    partition: LabelPartition,
    **kwargs,
) -> tuple[ScoreReport, ScoreReport]:
    """Separate reports for the seen and the unseen labels.

    Predictions (and gold) whose label is in neither set are counted in
    ``uncovered_pred`` (``uncovered_gold``) on both reports and nowhere else.
    """
    reports = []
    for labels in (partition.seen, partition.unseen):
        reports.append(
            score(
                [a for a in gold if a.label in labels],
                [a for a in pred if a.label in labels],
                policy,
                **kwargs,
            )
        )
    for r in reports:
        r.uncovered_pred = sum(a.label not in partition.labels for a in pred)
        r.uncovered_gold = sum(a.label not in partition.labels for a in gold)
    return reports[0], reports[1]


def load_partitions(path=None) -> dict[str, LabelPartition]:
    """Read seen/unseen label partitions; the packaged defaults when no path is given."""
    if path is None:
        text = resources.files("ieprompt").joinpath("data/partitions.yaml").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    data = yaml.safe_load(text) or {}
    return {
        name: LabelPartition(row.get("seen") or (), row.get("unseen") or ())
        for name, row in data.items()
    }
