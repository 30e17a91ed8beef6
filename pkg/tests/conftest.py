import pytest

_RESULTS_ATTR = "_sppinn_acceptance"


@pytest.fixture()
def acceptance(request):
    """Record one acceptance line: ``acceptance(label, status, detail)``.

    ``status`` is True (PASS), False (FAIL) or a string such as ``"NOT RUN"``.
    The lines are printed together at the end of the session.
    """
    results = getattr(request.config, _RESULTS_ATTR, None)
    if results is None:
        results = []
        setattr(request.config, _RESULTS_ATTR, results)

    def record(label, status, detail=""):
        word = status if isinstance(status, str) else ("PASS" if status else "FAIL")
        line = f"{word:8s} {label}: {detail}"
        results.append(line)
        print(line)
        return status

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, _RESULTS_ATTR, None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
