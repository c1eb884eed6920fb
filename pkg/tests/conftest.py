import os

import pytest

from mcpt.transport import TransportConfig, build_transition, solve

ORACLE_SEED = 12345
ORACLE_W = 10_000
WORKERS = os.cpu_count() or 1

# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def transport_config():
    return TransportConfig()


@pytest.fixture(scope="session")
def transport_model(transport_config):
    return build_transition(transport_config)


@pytest.fixture(scope="session")
def oracle_field(transport_config, transport_model):
    """Reference-PRNG flux at W = 10,000, shared by every transport comparison."""
    return solve(transport_config, transport_model, "reference-prng", seed=ORACLE_SEED, w=ORACLE_W,
                 workers=WORKERS)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
