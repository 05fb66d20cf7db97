import pytest

from mobpat.ingest import build_location_tree


@pytest.fixture
def five_sites():
    return build_location_tree([(f"s{k}", "site", None, (float(k), float(k % 2))) for k in range(1, 6)])


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
