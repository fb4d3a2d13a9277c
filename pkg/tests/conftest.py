import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lazyref.cli import corpus_files, corpus_path  # noqa: E402
from lazyref.parser import parse_program  # noqa: E402

_ACCEPTANCE = []


def load(name: str):
    return parse_program(corpus_path(name).read_text(encoding="utf-8"))


@pytest.fixture
def corpus():
    return {p.name: parse_program(p.read_text(encoding="utf-8")) for p in corpus_files()}


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if "test_acceptance.py" in report.nodeid and "::test_criterion_" in report.nodeid:
            _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE:
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{label}  {name}")
