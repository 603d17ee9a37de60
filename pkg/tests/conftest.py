from __future__ import annotations

from pathlib import Path

import pytest

from ieprompt.schema import load_schema

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
SCHEMAS = FIXTURES / "schemas"

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def schema_path():
    return lambda name: SCHEMAS / name


@pytest.fixture
def ner_schema():
    return load_schema(SCHEMAS / "ner.yaml")


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py::" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if name.startswith("test_criterion_"):
        detail = "" if report.passed else str(report.longrepr).strip().splitlines()[-1][:160]
        ACCEPTANCE[name] = (report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        ok, detail = ACCEPTANCE[name]
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        terminalreporter.write_line(line + (f"  -- {detail}" if detail else ""))
