from __future__ import annotations

import random
from dataclasses import replace

import pytest
from hypothesis import given, settings

from ieprompt.codegen import (
    RESULT_PREFIX,
    CompiledExample,
    InvalidAnnotation,
    RenderOptions,
    UnrenderableValue,
    quote,
    render_docstring,
    render_prompt,
    render_result_block,
)
from ieprompt.schema import Annotation, Document, load_schema

from conftest import SCHEMAS
from golden_cases import CASES, GOLDEN, render_case
from randgen import rand_gold, rand_schema, schema_and_gold


@pytest.mark.parametrize("name,schema_file,doc,opts", CASES, ids=[c[0] for c in CASES])
def test_golden(name, schema_file, doc, opts):
    expected = (GOLDEN / name).read_bytes()
    assert render_case(schema_file, doc, opts).encode("utf-8") == expected


def test_quote_escapes():
    assert quote('a"b\\c\nd\te') == '"a\\"b\\\\c\\nd\\te"'
    assert quote("é中😀\r") == '"é中😀\r"'
    with pytest.raises(UnrenderableValue):
        quote("bad \ud800")


def test_result_block_forms():
    schema = load_schema(SCHEMAS / "eae.yaml")
    assert render_result_block([], schema) == "result = []"
    gold = [Annotation("Transport", {"destination": ["Herat"], "mention": "arrived", "artifact": []})]
    assert render_result_block(gold, schema) == (
        'result = [\n    Transport(mention="arrived", artifact=[], destination=["Herat"]),\n]'
    )


def test_invalid_gold_is_rejected():
    schema = load_schema(SCHEMAS / "person.yaml")
    with pytest.raises(InvalidAnnotation):
        render_result_block([Annotation("Place", {"span": "x"})], schema)


def test_docstring_wrapping():
    assert render_docstring("Short.") == ['    """Short."""']
    assert render_docstring("") == []
    long = " ".join(["word"] * 40)
    lines = render_docstring(long, 40)
    assert lines[0] == '    """' and lines[-1] == '    """'
    assert all(len(line) <= 40 for line in lines)
    assert " ".join(line.strip() for line in lines[1:-1]) == long
    assert render_docstring("One.\n\nTwo.", 80) == ['    """', "    One.", "", "    Two.", '    """']
    assert render_docstring('ends with "quote"') == ['    """ends with "quote\\""""']
    assert render_docstring('has """ inside') == ['    """has \\"\\"\\" inside"""']


def test_split_offset_and_model_input():
    schema = load_schema(SCHEMAS / "ner.yaml")
    doc = Document("d", "Paris.", [Annotation("Location", {"span": "Paris"})])
    ex = render_prompt(schema, doc)
    head = ex.prompt[: ex.split_offset]
    assert head.endswith('text = "Paris."\n\n')
    assert ex.prompt[ex.split_offset:] == ex.result + "\n"
    assert ex.model_input == head + RESULT_PREFIX
    assert CompiledExample.from_dict(ex.to_dict()) == ex


def test_wrap_column_validated():
    with pytest.raises(ValueError):
        RenderOptions(wrap_column=4)


@settings(max_examples=150, deadline=None)
@given(schema_and_gold())
def test_render_is_deterministic(pair):
    schema, gold = pair
    doc = Document("d", "some text", gold)
    assert render_prompt(schema, doc) == render_prompt(schema, doc)


@settings(max_examples=150, deadline=None)
@given(schema_and_gold())
def test_guidelines_off_equals_guidelines_removed(pair):
    # turning guidelines off must be the same as rendering a schema that has none
    schema, gold = pair
    doc = Document("d", "t", gold)
    stripped = replace(
        schema,
        labels=[
            replace(l, guideline="", candidates=(), fields=[replace(f, comment="") for f in l.fields])
            for l in schema.labels
        ],
    )
    off = render_prompt(schema, doc, RenderOptions(include_guidelines=False)).prompt
    assert off == render_prompt(stripped, doc).prompt
    assert '"""' not in off and "#" not in off.split("text = ")[0]


def test_result_block_is_suffix_of_prompt():
    rng = random.Random(3)
    for _ in range(100):
        schema = rand_schema(rng)
        gold = rand_gold(rng, schema)
        ex = render_prompt(schema, Document("d", "x", gold))
        assert ex.prompt.endswith(render_result_block(gold, schema) + "\n")
