import pytest

from studentsim.synthetic import make_lecture, make_real_records

_acceptance_results = []


@pytest.fixture(scope="session")
def lecture():
    return make_lecture(n_slides=4, n_aois=4, n_transcripts=3, seed=11)


@pytest.fixture(scope="session")
def real_cohort(lecture):
    records, raw = make_real_records(lecture, 4, seed=5)
    return records, raw


@pytest.fixture
def lecture_file(tmp_path, lecture):
    from studentsim.dataset import save_lecture

    path = tmp_path / "lecture.jsonl"
    save_lecture(lecture, path)
    return path


@pytest.fixture
def records_file(tmp_path, real_cohort):
    from studentsim.dataset import export_cohort

    path = tmp_path / "students.jsonl"
    export_cohort(real_cohort[0], path)
    return path


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "acceptance" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = props["acceptance"]
        _acceptance_results.append((number, title, report.outcome, report.duration))


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            item.user_properties.append(("acceptance", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, duration in sorted(_acceptance_results, key=lambda r: (r[0] or 0)):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"[{status}] AC{number}: {title} ({duration:.2f}s)")
