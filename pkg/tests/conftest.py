import numpy as np
import pytest

from locbasis import OptimizerConfig, build_quadratures, build_space, init_identity, run
from locbasis.optimizer import LocalizedBasis

ACCEPTANCE_LINES: list[str] = []


def random_unitary(n, rng):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_basis(n, seed=0):
    return LocalizedBasis(random_unitary(n, np.random.default_rng(seed)), build_space(n))


@pytest.fixture(scope="session")
def optimized():
    """Optimized bases by N, with a budget cut to 2e5*N proposals to keep tests quick."""
    cache = {}

    def get(n):
        if n not in cache:
            space = build_space(n)
            quads = build_quadratures(space)
            cfg = OptimizerConfig(seed=1000 + n, max_proposals=200_000 * n)
            cache[n] = run(init_identity(space), cfg, quads) + (quads,)
        return cache[n]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
