import json

import pytest

from devicerank.synthetic import make_suite


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write((rec if isinstance(rec, str) else json.dumps(rec)) + "\n")
    return path


@pytest.fixture
def small_corpus(tmp_path):
    records = [
        {"label_id": "868.5320", "name": "Reservoir bag", "description": "A reservoir bag for breathing circuits (§ 868.5340)."},
        {"label_id": "868.5340", "name": "Nasal oxygen cannula", "description": "A nasal cannula delivers oxygen to the patient."},
        {"label_id": "864.7415", "name": "Abnormal hemoglobin assay", "description": "An assay that detects abnormal hemoglobin in blood.", "class": "II"},
    ]
    return write_jsonl(tmp_path / "corpus.jsonl", records)


@pytest.fixture(scope="session")
def suite():
    return make_suite()


@pytest.fixture
def suite_files(tmp_path):
    return make_suite().write(tmp_path / "data")


_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test checks")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    name = dict(report.user_properties).get("criterion")
    if name is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ok = report.outcome == "passed"
        prev = _criteria.get(name, (True, []))
        failed = prev[1] + ([] if ok else [report.nodeid.split("::")[-1]])
        _criteria[name] = (prev[0] and ok, failed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, failed) in _criteria.items():
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        if failed:
            line += f"  [failing: {', '.join(failed)}]"
        terminalreporter.write_line(line)
