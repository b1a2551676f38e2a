from __future__ import annotations

from collections import defaultdict

import pytest

from emrecg.parser import build_lexicon
from emrecg.synthetic import generate_dataset

_CRITERIA: dict[int, list[tuple[str, str, str]]] = defaultdict(list)


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        reason = ""
        if report.skipped and isinstance(report.longrepr, tuple):
            reason = report.longrepr[2]
        _CRITERIA[crit].append((report.nodeid, report.outcome, reason))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = int(m.args[0])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_CRITERIA):
        results = _CRITERIA[crit]
        outcomes = {o for _, o, _ in results}
        if "failed" in outcomes:
            verdict = "FAIL"
        elif outcomes == {"skipped"}:
            verdict = "SKIP"
        else:
            verdict = "PASS"
        reasons = sorted({r for _, o, r in results if o == "skipped" and r})
        note = f" ({reasons[0].removeprefix('Skipped: ')})" if reasons else ""
        tr.write_line(f"criterion {crit:2d}: {verdict}  [{len(results)} check(s)]{note}")


@pytest.fixture(scope="session")
def synth_ds():
    return generate_dataset(200, 0)


@pytest.fixture(scope="session")
def small_ds():
    return generate_dataset(40, 1)


@pytest.fixture(scope="session")
def synth_lex(synth_ds):
    return build_lexicon(synth_ds)
