import pytest

from ergising.experiments import default_regime, run_clt_trials

ACCEPTANCE_LINES: list[str] = []

# Shared Monte Carlo runs (each is minutes of enumeration).
MC_TRIALS = 2000
MC_SEED = 20240601


@pytest.fixture(scope="session")
def t1_report():
    return run_clt_trials(default_regime("T1", p=0.6), 20, MC_TRIALS, MC_SEED, beta=0.5)


@pytest.fixture(scope="session")
def t3_report():
    return run_clt_trials(default_regime("T3", c=1.0), 24, MC_TRIALS, MC_SEED, beta=0.5)


@pytest.fixture(scope="session")
def t4_report():
    return run_clt_trials(default_regime("T4"), 24, MC_TRIALS, MC_SEED, beta=0.5)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
