import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> {"label": str, "passed": int, "failed": int, "notes": [str]}
_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, label = marker.args
    entry = _criteria.setdefault(number, {"label": label, "passed": 0, "failed": 0, "notes": []})
    if report.failed:
        entry["failed"] += 1
    elif report.when == "call" or report.skipped:
        props = dict(item.user_properties)
        if "note" in props:
            entry["notes"].append(props["note"])
        if report.skipped and props.get("soft_ok") is False:
            entry["notes"].append("soft criterion missed")
        entry["passed"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "FAIL" if entry["failed"] else "PASS"
        line = f"AC{number:>2} {status}  {entry['label']}"
        if entry["notes"]:
            line += "  [" + "; ".join(entry["notes"]) + "]"
        terminalreporter.write_line(line)
