import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if passed else 'FAIL'} | {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_store():
    """A short CSPE chain on a 6 x 5 matrix with factor draws kept."""
    from cspe.chain import ChainConfig, run_chain
    from cspe.factorization import ObservedMatrix
    from cspe.nuts import NutsConfig
    from cspe.priors import CSPE

    g = np.random.default_rng(7)
    Y = np.outer(g.standard_normal(6), g.standard_normal(5)) + 0.1 * g.standard_normal((6, 5))
    mask = np.ones_like(Y, dtype=bool)
    mask[2, 3] = False
    cfg = ChainConfig(iterations=80, burn_in=40, seed=2, store_factors=True,
                      nuts=NutsConfig(adapt_iterations=40))
    return run_chain(ObservedMatrix(np.where(mask, Y, np.nan), mask), CSPE(1.5), cfg, K=2)
