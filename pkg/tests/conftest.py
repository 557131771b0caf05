import pytest

_acceptance = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    # one line per test: the call phase, or setup if it never got that far
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        label = (item.obj.__doc__ or item.name).strip().splitlines()[0]
        detail = dict(item.user_properties).get("detail", "")
        _acceptance.append((label, "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL"), detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in _acceptance:
        terminalreporter.write_line(f"{status}  {label}" + (f"  [{detail}]" if detail else ""))
