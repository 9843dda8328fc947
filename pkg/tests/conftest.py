import numpy as np
import pytest

from bcl.nn import Network, NetworkSpec


def random_net(rng, dims=None, dueling=None, scale=1.0):
    if dims is None:
        depth = int(rng.integers(1, 3))
        dims = [int(rng.integers(2, 9))] + [int(rng.integers(2, 17)) for _ in range(depth)] \
            + [int(rng.integers(2, 5))]
    if dueling is None:
        dueling = bool(rng.integers(2))
    net = Network.create(NetworkSpec(tuple(dims), dueling), int(rng.integers(1 << 31)))
    if scale != 1.0:
        net = net.with_params(net.params.scaled_add(net.params, scale - 1.0))
    # nonzero biases so every code path sees them
    for b in net.params.biases:
        b += rng.normal(0, 0.1, size=b.shape)
    return net


def as_layers(net):
    return [(w.tolist(), b.tolist()) for w, b in zip(net.params.weights, net.params.biases)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
