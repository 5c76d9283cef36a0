from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from decorrvi.data import Dataset, make_folds
from decorrvi.estimators import Nuisances
from decorrvi.nuisance import NuisanceSpec

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def oracle_nuisances(data: Dataset, B: int = 5, seed: int = 0, *, mu_z=None, nu_z=None, mu_xz=None,
                     family: str = "linear", shuffled=()) -> Nuisances:
    """Nuisances with any of mu(z), nu(z), mu(x, z) replaced by known functions."""
    overrides = {k: f for k, f in (("mu_z", mu_z), ("nu_z", nu_z), ("mu_xz", mu_xz)) if f is not None}
    return Nuisances(data, make_folds(data.n, B, seed), NuisanceSpec(family), seed, overrides, shuffled)


def example1(n: int, delta: float, seed: int, h: int = 5) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    z = rng.standard_normal((n, h))
    z[:, 0] += delta * x
    return Dataset(x[:, None], z, 2 * x + rng.standard_normal(n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> bool:
    """Log one acceptance line; it is echoed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
