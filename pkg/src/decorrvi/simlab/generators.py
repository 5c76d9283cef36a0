"""Data-generating processes for the five simulation examples.

All examples use ``h = 5`` Z columns and standard normal outcome noise.

1. ``X ~ N(0, 1)``, ``Z_1 = delta X + xi``, other Z standard normal, ``Y = 2X + eps``.
2. ``X ~ N(0, 1)``, ``Z_1 = X + N(0, 0.4^2)``, ``Y = 2X^3 + eps``.
3. ``Z ~ N(0, I)``, ``X_j = 2 Z_j + eps_j`` (j = 1, 2), ``Y = 2 X_1 X_2 + eps``.
4. ``X, Z_j ~ U(-1, 1)`` independent, ``Y = X^2 (X + 7/5) + (25/9) Z_1^2 + eps``.
5. ``X ~ N(0, 1)``, ``Z_1 = X + N(0, 0.4^2)``, ``Y = 2X^2 + X Z_1 + eps``.

Examples 2, 4 and 5 replace X by its degree-3 orthogonal polynomials by
default.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from decorrvi.data import Dataset, expand_x
from decorrvi.rng import named_rng

EXAMPLES = (1, 2, 3, 4, 5)
DEFAULT_N = 10_000
DEFAULT_H = 5
BASIS_DEGREE = 3
_EXPANDED = {2, 4, 5}


@dataclass(frozen=True)
class GeneratorConfig:
    example_id: int
    n: int = DEFAULT_N
    delta: float = 0.0
    seed: int = 0
    basis_expand: bool | None = None  # None: on for examples 2, 4 and 5
    h: int = DEFAULT_H

    def __post_init__(self) -> None:
        if self.example_id not in EXAMPLES:
            raise ValueError(f"example_id must be one of {EXAMPLES}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.h < (2 if self.example_id == 3 else 1):
            raise ValueError("too few Z columns for this example")

    @property
    def expands(self) -> bool:
        return self.example_id in _EXPANDED if self.basis_expand is None else bool(self.basis_expand)

    def to_dict(self) -> dict:
        return asdict(self)


def _raw(cfg: GeneratorConfig, rng: np.random.Generator):
    n, h, ex = cfg.n, cfg.h, cfg.example_id
    eps = rng.standard_normal(n)
    if ex == 3:
        z = rng.standard_normal((n, h))
        x = 2 * z[:, :2] + rng.standard_normal((n, 2))
        return x, z, 2 * x[:, 0] * x[:, 1] + eps
    if ex == 4:
        x = rng.uniform(-1, 1, n)
        z = rng.uniform(-1, 1, (n, h))
        return x[:, None], z, x ** 2 * (x + 1.4) + (25 / 9) * z[:, 0] ** 2 + eps
    x = rng.standard_normal(n)
    z = rng.standard_normal((n, h))
    if ex == 1:
        z[:, 0] = cfg.delta * x + z[:, 0]
        y = 2 * x + eps
    else:
        z[:, 0] = x + 0.4 * z[:, 0]
        y = 2 * x ** 3 + eps if ex == 2 else 2 * x ** 2 + x * z[:, 0] + eps
    return x[:, None], z, y


def generate(cfg: GeneratorConfig) -> Dataset:
    """One draw of ``n`` rows; reproducible from ``cfg.seed``."""
    rng = named_rng(cfg.seed, "generate", cfg.example_id, float(cfg.delta), cfg.n)
    x, z, y = _raw(cfg, rng)
    names_x = tuple(f"x{j + 1}" for j in range(x.shape[1]))
    names_z = tuple(f"z{j + 1}" for j in range(z.shape[1]))
    data = Dataset(x, z, y, names_x, names_z, "y")
    return expand_x(data, BASIS_DEGREE) if cfg.expands else data
