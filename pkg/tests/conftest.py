import numpy as np
import pytest

from tinytc.ingest import CorpusSpec, generate_synthetic_corpus, ingest_capture, records_to_arrays

_ACCEPTANCE: dict[int, dict] = {}


@pytest.fixture(scope="session")
def corpus():
    """The 4-class, 200-session synthetic corpus as ``(X, y)``."""
    cap, labels = generate_synthetic_corpus(CorpusSpec(), seed=0)
    X, y = records_to_arrays(ingest_capture(cap, lambda k: labels.get(k)))
    return X, y


@pytest.fixture(scope="session")
def small_corpus(corpus):
    X, y = corpus
    idx = np.concatenate([np.flatnonzero(y == c)[:10] for c in range(4)])
    return X[idx], y[idx]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    crit = marker.kwargs.get("criterion", marker.args[0] if marker.args else None)
    title = marker.kwargs.get("title", marker.args[1] if len(marker.args) > 1 else item.name)
    entry = _ACCEPTANCE.setdefault(crit, {"title": title, "passed": True, "ran": False})
    if report.when in ("setup", "call"):
        # setup time includes shared fixtures such as the smoke search
        entry["duration"] = entry.get("duration", 0.0) + report.duration
    if report.when == "call" or report.failed:
        entry["ran"] = True
        entry["passed"] &= report.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[crit]
        status = "PASS" if e["passed"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {crit:>2}: {status}  {e['title']}  ({e.get('duration', 0.0):.1f}s)")
