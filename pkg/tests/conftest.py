import numpy as np
import pytest

from beamopt.model import ChannelSet, IGSBeamformer, OuterProductBeamformer


def cn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_instance(rng, K=3, Q=2, M=3, sigma=0.5):
    ch = ChannelSet(cn(rng, K, M, M), np.zeros(K), sigma)
    bf = OuterProductBeamformer(cn(rng, K, Q, M), cn(rng, K, Q, M))
    return ch, bf


def random_igs(rng, K=3, Q=2, M=3):
    return IGSBeamformer(cn(rng, K, Q, M), cn(rng, K, Q, M), cn(rng, K, Q, M), cn(rng, K, Q, M))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
