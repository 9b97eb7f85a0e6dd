import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    results = {}
    for outcome in ("passed", "failed", "skipped"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if getattr(report, "when", "call") in ("call", "setup"):
                results.setdefault(nodeid, outcome.upper())
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid, outcome in results.items():
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{outcome:7s} {name}")
