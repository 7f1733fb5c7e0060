import json
from pathlib import Path

import numpy as np
import pytest

from fairdesert.basis import BasisConfig
from fairdesert.data import Dataset
from fairdesert.simulate import DgpConfig, gen_dataset

RESULTS_FILE = Path(__file__).parent / "_acceptance_results.json"


@pytest.fixture(scope="session")
def small_dgp():
    """One n=2000 draw of the synthetic generative model."""
    return gen_dataset(DgpConfig(n=2000, seed=42))


@pytest.fixture(scope="session")
def univariate_basis():
    return BasisConfig(interaction_order=1)


@pytest.fixture
def tiny_dataset():
    rng = np.random.default_rng(0)
    n = 40
    return Dataset(
        s=rng.integers(0, 2, n),
        z=rng.integers(0, 2, n),
        y=rng.integers(0, 2, n),
        x=rng.uniform(size=(n, 2)),
        covariate_names=("x1", "x2"),
        scaling=((0.0, 1.0), (0.0, 1.0)),
        scaled=True,
    )


def record_criterion(number, passed, detail):
    """Accumulate acceptance-criterion outcomes for the terminal summary."""
    results = {}
    if RESULTS_FILE.exists():
        results = json.loads(RESULTS_FILE.read_text())
    results[str(number)] = {"passed": bool(passed), "detail": detail}
    RESULTS_FILE.write_text(json.dumps(results, indent=2, sort_keys=True))


def pytest_terminal_summary(terminalreporter):
    if not RESULTS_FILE.exists():
        return
    results = json.loads(RESULTS_FILE.read_text())
    terminalreporter.write_sep("-", "acceptance criteria")
    for key in sorted(results, key=int):
        entry = results[key]
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {key}: {status} - {entry['detail']}")


def pytest_sessionstart(session):
    if RESULTS_FILE.exists():
        RESULTS_FILE.unlink()
