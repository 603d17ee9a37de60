"""Golden prompt cases: (file name, schema file, document, render options).

Set IEPROMPT_REGEN_GOLDEN=1 and run ``python tests/golden_cases.py`` to rewrite
the files; review the diff by hand before committing.
"""
import os
from pathlib import Path

from ieprompt.codegen import RenderOptions, render_prompt
from ieprompt.schema import Annotation, Document, load_schema

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"
SCHEMAS = HERE / "fixtures" / "schemas"

A = Annotation

CASES = [
    (
        "ner_person.txt",
        "person.yaml",
        Document("a", "Obama spoke.", [A("Person", {"span": "Obama"})]),
        RenderOptions(),
    ),
    (
        "ner_person_baseline.txt",
        "person.yaml",
        Document("a", "Obama spoke.", [A("Person", {"span": "Obama"})]),
        RenderOptions(include_guidelines=False),
    ),
    (
        "ner_news.txt",
        "ner.yaml",
        Document(
            "news-1",
            'Angela Merkel met Barack Obama in Paris.\nBoth praised the "United Nations"\tagenda.',
            [
                A("Person", {"span": "Angela Merkel"}),
                A("Person", {"span": "Barack Obama"}),
                A("Location", {"span": "Paris"}),
                A("Organization", {"span": '"United Nations"'}),
            ],
        ),
        RenderOptions(),
    ),
    (
        "ner_empty.txt",
        "ner.yaml",
        Document("news-2", "Nothing to see here.", []),
        RenderOptions(candidates_k=2),
    ),
    (
        "ee_cyber.txt",
        "casie_ee.yaml",
        Document(
            "cyber-1",
            "Hackers stole 2 million records after a phishing campaign lured staff.",
            [A("DatabreachAttack", {"mention": "stole"}), A("PhishingAttack", {"mention": "phishing"})],
        ),
        RenderOptions(),
    ),
    (
        "eae_attack.txt",
        "eae.yaml",
        Document(
            "eae-1",
            "Rebels fired rockets at the convoy near Kabul before the troops arrived in Herat.",
            [
                A(
                    "Attack",
                    {"mention": "fired", "attacker": ["Rebels"], "target": ["the convoy"], "place": ["Kabul"]},
                ),
                A("Transport", {"mention": "arrived", "artifact": ["the troops"], "destination": ["Herat"]}),
            ],
        ),
        RenderOptions(),
    ),
    (
        "sf_person.txt",
        "sf.yaml",
        Document(
            "sf-1",
            "Maria Lopez, 42, a senior engineer at Acme Corp, was born in Valencia.",
            [
                A(
                    "PersonTemplate",
                    {
                        "query": "Maria Lopez",
                        "employee_of": ["Acme Corp"],
                        "title": ["senior engineer"],
                        "city_of_birth": "Valencia",
                        "age": "42",
                    },
                )
            ],
        ),
        RenderOptions(),
    ),
    (
        "custom_launcher.txt",
        "space.yaml",
        Document(
            "space-1",
            "The Apollo 11 mission lifted off from Florida on 16 July 1969 aboard a Saturn V "
            "built for NASA, carrying Neil Armstrong, Buzz Aldrin and Michael Collins to the Moon.",
            [
                A(
                    "Launcher",
                    {
                        "mention": "Saturn V",
                        "space_company": "NASA",
                        "crew": ["Neil Armstrong", "Buzz Aldrin", "Michael Collins"],
                    },
                ),
                A(
                    "Mission",
                    {"mention": "Apollo 11", "date": "16 July 1969", "departure": "Florida", "destination": "Moon"},
                ),
            ],
        ),
        RenderOptions(),
    ),
]


def render_case(schema_file, doc, opts):
    return render_prompt(load_schema(SCHEMAS / schema_file), doc, opts).prompt


if __name__ == "__main__" and os.environ.get("IEPROMPT_REGEN_GOLDEN") == "1":
    for name, schema_file, doc, opts in CASES:
        if name == "ner_person.txt":
            continue  # hand-written, never regenerated
        (GOLDEN / name).write_text(render_case(schema_file, doc, opts), encoding="utf-8", newline="\n")
        print("wrote", name)
