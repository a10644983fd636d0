import numpy as np
import pytest

from chaoskit.crn import parse_network

# small networks exercised across modules
CORPUS = {
    "special_constant": "kernel k = constant(rate=1)\nS1 + S2 -> S2 + S2 @ k",
    "special_tophat": "kernel k = tophat(radius=0.2, rate=3)\nS1 + S2 -> S2 + S2 @ k",
    "reversible": (
        "kernel a = tophat(radius=0.3, rate=2)\nkernel b = constant(rate=1.5)\n"
        "S1 + S2 -> S3 + S3 @ a\nS3 + S3 -> S1 + S2 @ b\nS1 + S1 -> S1 + S2 @ a"
    ),
    "two_blocks": (
        "kernel a = tophat(radius=0.2, rate=3)\nkernel g = gaussian(width=0.1, rate=2)\n"
        "S1 + S2 -> S2 + S2 @ a\nS3 + S4 -> S3 + S3 @ g"
    ),
    "self": "kernel a = tophat(radius=0.25, rate=2)\nS1 + S1 -> S1 + S2 @ a",
}

# initial masses giving a propagating start for each corpus network
CORPUS_MASSES = {
    "special_constant": (0.5, 0.5),
    "special_tophat": (0.5, 0.5),
    "reversible": (0.4, 0.3, 0.3),
    "two_blocks": (0.3, 0.3, 0.4, 0.0),
    "self": (0.6, 0.4),
}

ACCEPTANCE_LINES = []


@pytest.fixture(params=sorted(CORPUS))
def corpus_net(request):
    return request.param, parse_network(CORPUS[request.param])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
