"""Seeded training-time regularization of (schema, gold) pairs.

Five transforms are applied in a fixed order: class dropout, class order
shuffling, guideline paraphrase selection, representative candidate sampling
and class name masking. Every random decision is recorded in a
:class:`RegularizationTrace` so the transformed example can be interpreted
(and unmasked) later.

Randomness comes from :class:`PortableRNG`: MT19937 as provided by
``random.Random`` seeded with the 64-bit seed, consumed *only* through
``getrandbits``. Bounded integers use rejection sampling, shuffles are
Fisher-Yates from the back, and sampling without replacement is a partial
Fisher-Yates over the index list. ``getrandbits`` output for an integer seed
is stable across platforms and Python versions, which ``random.shuffle`` and
``random.sample`` do not promise.

Draw order per example:

1. one uniform per label in declaration order (dropout, only when p > 0);
2. shuffle of the surviving labels (only when enabled);
3. one paraphrase pick per surviving label, declaration order;
4. one candidate sample per surviving label, declaration order (only when the
   pool is larger than k);
5. one uniform for masking (only when masking is a probability).
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from typing import Sequence

from .schema import PLACEHOLDER_RE, Annotation, TaskSchema

MASK64 = (1 << 64) - 1


class RegularizationError(ValueError):
    pass


class EmptySchemaAfterDropout(RegularizationError):
    pass


class MissingParaphrases(RegularizationError):
    pass


class UnknownPlaceholder(RegularizationError):
    pass


class PortableRNG:
    def __init__(self, seed: int):
        self._r = random.Random(seed & MASK64)

    def uniform(self) -> float:
        return self._r.getrandbits(53) / 9007199254740992.0

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        bits = (n - 1).bit_length()
        while True:
            r = self._r.getrandbits(bits)
            if r < n:
                return r

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        idx = list(range(n))
        for i in range(min(k, n)):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[: min(k, n)]


def derive_seed(seed: int, index: int) -> int:
    """Per-example seed: ``seed XOR blake2b-64(str(index))``."""
    digest = hashlib.blake2b(str(index).encode(), digest_size=8).digest()
    return (seed ^ int.from_bytes(digest, "little")) & MASK64


@dataclass(frozen=True)
class RegularizationConfig:
    shuffle: bool = False
    dropout_p: float = 0.0
    paraphrase: bool = False
    candidates_k: int = 5
    mask_names: bool | float = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.candidates_k < 0:
            raise ValueError(f"candidates_k must be >= 0, got {self.candidates_k}")
        if not isinstance(self.mask_names, bool) and not 0.0 <= self.mask_names <= 1.0:
            raise ValueError(f"mask probability must be in [0, 1], got {self.mask_names}")

    @classmethod
    def identity(cls, seed: int = 0, candidates_k: int = 1 << 30) -> "RegularizationConfig":
        return cls(candidates_k=candidates_k, seed=seed)

    def to_dict(self) -> dict:
        return {
            "shuffle": self.shuffle,
            "dropout_p": self.dropout_p,
            "paraphrase": self.paraphrase,
            "candidates_k": self.candidates_k,
            "mask_names": self.mask_names,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegularizationConfig":
        return cls(**data)


@dataclass(frozen=True)
class RegularizationTrace:
    seed: int
    permutation: tuple[int, ...]
    dropped: frozenset[str] = frozenset()
    chosen_paraphrase: dict[str, int] = field(default_factory=dict)
    chosen_candidates: dict[str, tuple[int, ...]] = field(default_factory=dict)
    mask_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "permutation", tuple(self.permutation))
        object.__setattr__(self, "dropped", frozenset(self.dropped))
        object.__setattr__(
            self,
            "chosen_candidates",
            {k: tuple(v) for k, v in self.chosen_candidates.items()},
        )

    @classmethod
    def identity(cls, schema: TaskSchema, seed: int = 0) -> "RegularizationTrace":
        return cls(
            seed=seed,
            permutation=range(len(schema.labels)),
            chosen_candidates={
                label.name: range(len(label.candidates)) for label in schema.labels
            },
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "permutation": list(self.permutation),
            "dropped": sorted(self.dropped),
            "chosen_paraphrase": dict(self.chosen_paraphrase),
            "chosen_candidates": {k: list(v) for k, v in self.chosen_candidates.items()},
            "mask_map": dict(self.mask_map),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegularizationTrace":
        return cls(
            seed=data["seed"],
            permutation=data["permutation"],
            dropped=data.get("dropped", ()),
            chosen_paraphrase=dict(data.get("chosen_paraphrase", {})),
            chosen_candidates=dict(data.get("chosen_candidates", {})),
            mask_map=dict(data.get("mask_map", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))


def apply(
    schema: TaskSchema, gold: Sequence[Annotation], config: RegularizationConfig
) -> tuple[TaskSchema, list[Annotation], RegularizationTrace]:
    labels = schema.labels
    if not labels:
        raise EmptySchemaAfterDropout(f"schema {schema.dataset_id!r} has no labels")
    if config.paraphrase:
        missing = [label.name for label in labels if not label.paraphrases]
        if missing:
            raise MissingParaphrases(f"no paraphrases for: {', '.join(missing)}")

    rng = PortableRNG(config.seed)

    dropped_idx: list[int] = []
    if config.dropout_p > 0:
        for i in range(len(labels)):
            if rng.uniform() < config.dropout_p:
                dropped_idx.append(i)
        if len(dropped_idx) == len(labels):
            # never empty the schema: rescind the last drop
            dropped_idx.pop()
    dropped_set = set(dropped_idx)
    survivors = [i for i in range(len(labels)) if i not in dropped_set]

    permutation = list(survivors)
    if config.shuffle:
        rng.shuffle(permutation)

    chosen_paraphrase: dict[str, int] = {}
    if config.paraphrase:
        for i in survivors:
            label = labels[i]
            chosen_paraphrase[label.name] = rng.below(1 + len(label.paraphrases))

    chosen_candidates: dict[str, tuple[int, ...]] = {}
    for i in survivors:
        label = labels[i]
        n = len(label.candidates)
        if config.candidates_k >= n:
            picks = list(range(n))
        else:
            picks = sorted(rng.sample_indices(n, config.candidates_k))
        chosen_candidates[label.name] = tuple(picks)

    if isinstance(config.mask_names, bool):
        mask = config.mask_names
    else:
        mask = rng.uniform() < config.mask_names
    mask_map = (
        {labels[i].name: f"LABEL_{j + 1}" for j, i in enumerate(permutation)} if mask else {}
    )

    new_labels = []
    for i in permutation:
        label = labels[i]
        pool = (label.guideline, *label.paraphrases)
        new_labels.append(
            replace(
                label,
                name=mask_map.get(label.name, label.name),
                guideline=pool[chosen_paraphrase.get(label.name, 0)],
                candidates=[label.candidates[c] for c in chosen_candidates[label.name]],
            )
        )
    dropped = frozenset(labels[i].name for i in dropped_idx)
    new_gold = [
        Annotation(mask_map.get(a.label, a.label), a.values) for a in gold if a.label not in dropped
    ]
    trace = RegularizationTrace(
        seed=config.seed,
        permutation=permutation,
        dropped=dropped,
        chosen_paraphrase=chosen_paraphrase,
        chosen_candidates=chosen_candidates,
        mask_map=mask_map,
    )
    return replace(schema, labels=new_labels), new_gold, trace


def unmask(annotations: Sequence[Annotation], trace: RegularizationTrace) -> list[Annotation]:
    inverse = {v: k for k, v in trace.mask_map.items()}
    out = []
    for a in annotations:
        if a.label in inverse:
            out.append(Annotation(inverse[a.label], a.values))
        elif PLACEHOLDER_RE.fullmatch(a.label):
            raise UnknownPlaceholder(f"{a.label} is not in the trace's mask map")
        else:
            out.append(a)
    return out
