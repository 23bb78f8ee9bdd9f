import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import PROPERTY_OUTCOMES, RESULTS  # noqa: E402


def pytest_collection_modifyitems(items):
    # acceptance last, so it can reuse the property-suite outcomes of this session
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py")
               or it.nodeid.startswith("test_acceptance.py"))


def pytest_runtest_logreport(report):
    if "test_properties.py::" in report.nodeid and report.when == "call":
        PROPERTY_OUTCOMES[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
