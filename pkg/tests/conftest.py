import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, independent of capture."""
    results = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if m and getattr(rep, "when", "call") == "call":
                n = int(m.group(1))
                results[n] = status == "passed" and results.get(n, True)
    if results:
        terminalreporter.write_line("")
        for n in sorted(results):
            word = "pass" if results[n] else "FAIL"
            terminalreporter.write_line(f"acceptance criterion {n}: {word}")
