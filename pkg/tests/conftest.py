import pytest


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props or rep.when != "call" and outcome != "error":
                continue
            lines.append((props["criterion"], "PASS" if outcome == "passed" else "FAIL",
                          props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for crit, status, detail in sorted(lines, key=lambda x: (int(x[0].split(".")[0]), x[0])):
        terminalreporter.write_line(f"{status}  criterion {crit}  {detail}")


@pytest.fixture
def criterion(record_property):
    """Tag an acceptance test: criterion("3", "description"); later detail("...")."""
    def tag(number, detail=""):
        record_property("criterion", number)
        record_property("detail", detail)
    return tag
