import pytest

from qho_kam.hermite import build_basis

# acceptance outcomes collected by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def basis16():
    return build_basis(16, 64)


@pytest.fixture(scope="session")
def basis32():
    return build_basis(32, 128)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key:>2} {name}: {detail}")
