from __future__ import annotations

import json

from ieprompt.codegen import RenderOptions
from ieprompt.pipeline import RunManifest, compile_documents, run
from ieprompt.regularize import RegularizationConfig
from ieprompt.schema import Annotation, Document

from conftest import FIXTURES, SCHEMAS


def test_parallel_compile_matches_serial(ner_schema):
    docs = [Document(f"d{i}", f"Paris {i}", [Annotation("Location", {"span": "Paris"})]) for i in range(300)]
    cfg = RegularizationConfig(shuffle=True, dropout_p=0.2, paraphrase=True, mask_names=0.5, seed=3)
    serial = compile_documents(ner_schema, docs, cfg, RenderOptions(), jobs=1)
    assert compile_documents(ner_schema, docs, cfg, RenderOptions(), jobs=2) == serial
    assert len({ex.trace.to_json() for ex in serial}) > 1


def test_run_with_masking_unmasks_predictions(tmp_path):
    manifest = RunManifest(
        schema=str(SCHEMAS / "ner.yaml"),
        inputs=[str(FIXTURES / "ner_100.jsonl")],
        output_dir=str(tmp_path),
        seed=1,
        regularization=RegularizationConfig(shuffle=True, mask_names=True).to_dict(),
        echo_gold=True,
    )
    out = run(manifest)
    score = json.loads((out / "score.json").read_text())
    assert score["micro"]["f1"] == 1.0
    assert set(score["per_label"]) == {"Person", "Location", "Organization"}
    first = json.loads((out / "generations.jsonl").read_text().splitlines()[0])
    assert "LABEL_" in first["generation"]
    assert RunManifest.load(out / "manifest.json") == manifest
