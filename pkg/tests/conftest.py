import warnings

import pytest

from dynblockade import experiments as ex
from dynblockade.errors import TruncationWarning


@pytest.fixture(scope="session")
def fig1_combined():
    return ex.run_fig1("combined")


@pytest.fixture(scope="session")
def fig1_continuous():
    return ex.run_fig1("continuous")


@pytest.fixture(scope="session")
def fig1_pulses_only():
    return ex.run_fig1("pulses_only")


@pytest.fixture(scope="session")
def fig1_g0():
    return ex.conventional(ex.FIG1).g0


@pytest.fixture(scope="session")
def fig4_strong():
    return ex.run_fig4("strong")


@pytest.fixture(scope="session")
def fig4_weak():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return ex.run_fig4("weak")
