import pytest


def pytest_configure(config):
    config.acceptance_results = {}


@pytest.fixture
def acceptance_log(request):
    return request.config.acceptance_results


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "acceptance_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        title, ok, elapsed, detail = results[num]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {num:2d}. {title} ({elapsed:.1f}s) {detail}")
