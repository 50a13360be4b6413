import numpy as np
import pytest

from contactmsm import synth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def three_state_chain():
    """Path chain with eigenvalues 1, 0.98, 0.94 (slowest timescale -1/ln 0.98)."""
    return synth.metastable_chain(0.98, 3)


@pytest.fixture(scope="session")
def hmm_data(three_state_chain):
    """100 trajectories x 2000 frames of 20 noisy binary contacts."""
    spec = synth.HmmSpec(three_state_chain, synth.block_templates(3, 20), n_traj=100,
                         traj_len=2000, seed=2024)
    return synth.gen_hmm(spec)


@pytest.fixture(scope="session")
def small_hmm_data(three_state_chain):
    spec = synth.HmmSpec(three_state_chain, synth.block_templates(3, 12), n_traj=12,
                         traj_len=600, seed=7)
    return synth.gen_hmm(spec)


_CRITERIA: dict = {}


def pytest_runtest_logreport(report):
    """Collect acceptance results (tests tagged with a ``criterion`` property)."""
    props = dict(report.user_properties)
    if report.when == "call" and "criterion" in props:
        _CRITERIA[props["criterion"]] = ("PASS" if report.passed else "FAIL", props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_CRITERIA):
        status, detail = _CRITERIA[crit]
        terminalreporter.write_line(f"criterion {crit:>2}: {status}  {detail}")
