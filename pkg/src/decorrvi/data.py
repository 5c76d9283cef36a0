"""Numeric tables, moment summaries, polynomial bases and small linear algebra.

A :class:`Dataset` splits the columns of a numeric table into a block of
covariates of interest ``X`` (n x g), the remaining covariates ``Z``
(n x h) and a response ``y``.  Everything else in the package consumes
datasets and the helpers defined here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from decorrvi.errors import DataError, InsufficientDataError
from decorrvi.rng import named_rng


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Column-partitioned numeric table ``U = (X, Z, Y)``."""

    x_block: np.ndarray
    z_block: np.ndarray
    y: np.ndarray
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()
    y_name: str = "y"

    def __post_init__(self) -> None:
        x = np.asarray(self.x_block, dtype=np.float64)
        z = np.asarray(self.z_block, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if x.ndim == 1:
            x = x[:, None]
        n = y.shape[0]
        if z.ndim == 1:
            z = z.reshape(n, -1) if z.size else np.zeros((n, 0))
        if n < 1:
            raise DataError("dataset must have at least one row")
        if x.shape[0] != n or z.shape[0] != n:
            raise DataError(
                f"row counts differ: X has {x.shape[0]}, Z has {z.shape[0]}, y has {n}"
            )
        for name, block in (("X", x), ("Z", z), ("y", y)):
            if not np.all(np.isfinite(block)):
                row = int(np.argwhere(~np.isfinite(block))[0][0])
                raise DataError(f"non-finite entry in {name} at row {row}")
        x_names = tuple(self.x_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        z_names = tuple(self.z_names) or tuple(f"z{j + 1}" for j in range(z.shape[1]))
        if len(x_names) != x.shape[1] or len(z_names) != z.shape[1]:
            raise DataError("column names do not match block widths")
        object.__setattr__(self, "x_block", _frozen(x))
        object.__setattr__(self, "z_block", _frozen(z))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x_names", x_names)
        object.__setattr__(self, "z_names", z_names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def g(self) -> int:
        return self.x_block.shape[1]

    @property
    def h(self) -> int:
        return self.z_block.shape[1]

    @property
    def column_names(self) -> tuple[str, ...]:
        return self.x_names + self.z_names + (self.y_name,)

    def rows(self, index: np.ndarray) -> "Dataset":
        """Row subset, keeping the column partition."""
        return Dataset(
            self.x_block[index], self.z_block[index], self.y[index],
            self.x_names, self.z_names, self.y_name,
        )

    def with_z(self, columns: Sequence[int]) -> "Dataset":
        """Keep only the listed Z columns."""
        cols = list(columns)
        return Dataset(
            self.x_block, self.z_block[:, cols], self.y,
            self.x_names, tuple(self.z_names[c] for c in cols), self.y_name,
        )

    def with_x(self, x_block: np.ndarray, names: Sequence[str] | None = None) -> "Dataset":
        """Replace the X block, e.g. by a basis expansion."""
        return Dataset(x_block, self.z_block, self.y, tuple(names or ()), self.z_names, self.y_name)


@dataclass(frozen=True)
class MomentSummary:
    """Sample moments used by the quadratic-form parameters.

    Covariances use denominator ``n``.  ``gamma`` is the raw second
    moment of ``Z``, ``Sigma_Z + m_Z m_Z^T``.
    """

    m_x: np.ndarray
    sigma_x: np.ndarray
    m_z: np.ndarray
    sigma_z: np.ndarray
    gamma: np.ndarray
    var_y: float


@dataclass(frozen=True)
class FoldAssignment:
    """Balanced random partition of ``range(n)`` into ``B`` folds."""

    fold_of_row: np.ndarray
    B: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "fold_of_row", np.asarray(self.fold_of_row, dtype=np.int64))
        self.fold_of_row.flags.writeable = False

    @property
    def n(self) -> int:
        return self.fold_of_row.shape[0]

    def eval_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == k)

    def train_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of_row, minlength=self.B)


# --------------------------------------------------------------------------- #
# CSV loading
# --------------------------------------------------------------------------- #

def parse_selector(selector: str | Sequence[str], header: Sequence[str] | None = None) -> list[str]:
    """Expand a column selector into a list of names.

    Accepts a comma-separated list where each item is either a column
    name or a range ``z1..z5`` (shared prefix, integer suffixes).
    """
    if not isinstance(selector, str):
        items = [s for part in selector for s in parse_selector(part, header)]
        return items
    names: list[str] = []
    for item in (s.strip() for s in selector.split(",")):
        if not item:
            continue
        if ".." in item:
            lo, hi = item.split("..", 1)
            p_lo, i_lo = _split_suffix(lo)
            p_hi, i_hi = _split_suffix(hi or "")
            if hi and p_hi and p_hi != p_lo:
                raise DataError(f"range {item!r} mixes prefixes")
            if i_lo is None or i_hi is None or i_hi < i_lo:
                raise DataError(f"malformed column range {item!r}")
            names.extend(f"{p_lo}{i}" for i in range(i_lo, i_hi + 1))
        else:
            names.append(item)
    return names


def _split_suffix(token: str) -> tuple[str, int | None]:
    stem = token.rstrip("0123456789")
    digits = token[len(stem):]
    return stem, (int(digits) if digits else None)


def load_csv(path: str | Path, x_cols, z_cols, y_col: str) -> Dataset:
    """Read a headed CSV file into a :class:`Dataset`.

    Args:
        path: CSV file with a header row.
        x_cols: Selector for the covariates of interest.
        z_cols: Selector for the remaining covariates (may be empty).
        y_col: Name of the response column.

    Raises:
        DataError: for a missing file or column, a non-numeric or
            non-finite cell, or overlapping/empty selections.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    x_names = parse_selector(x_cols)
    z_names = parse_selector(z_cols) if z_cols else []
    y_names = parse_selector(y_col)
    if not x_names:
        raise DataError("empty X selection")
    if len(y_names) != 1:
        raise DataError(f"y selector must name exactly one column, got {y_names}")
    chosen = x_names + z_names + y_names
    dupes = sorted({c for c in chosen if chosen.count(c) > 1})
    if dupes:
        raise DataError(f"column selectors overlap on {dupes}")

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        missing = [c for c in chosen if c not in header]
        if missing:
            raise DataError(f"column(s) {missing} not in header of {path}")
        idx = [header.index(c) for c in chosen]
        rows = []
        for r, record in enumerate(reader):
            if not record or all(not cell.strip() for cell in record):
                continue
            vals = []
            for c, j in zip(chosen, idx):
                cell = record[j].strip() if j < len(record) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"non-numeric cell {cell!r} at row {r}, column {c!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"non-finite cell {cell!r} at row {r}, column {c!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path} has no data rows")
    table = np.asarray(rows, dtype=np.float64)
    g, h = len(x_names), len(z_names)
    return Dataset(
        table[:, :g], table[:, g:g + h], table[:, g + h],
        tuple(x_names), tuple(z_names), y_names[0],
    )


# --------------------------------------------------------------------------- #
# Moments and algebra
# --------------------------------------------------------------------------- #

def summarize(data: Dataset) -> MomentSummary:
    """Sample means and (denominator-n) covariances of X, Z and Y."""
    if data.n < 2:
        raise InsufficientDataError("summarize needs at least two rows")
    x, z = data.x_block, data.z_block
    m_x = x.mean(axis=0)
    m_z = z.mean(axis=0)
    xc = x - m_x
    zc = z - m_z
    sigma_x = xc.T @ xc / data.n
    sigma_z = zc.T @ zc / data.n
    sigma_x = (sigma_x + sigma_x.T) / 2
    sigma_z = (sigma_z + sigma_z.T) / 2
    gamma = sigma_z + np.outer(m_z, m_z)
    var_y = float(np.mean((data.y - data.y.mean()) ** 2))
    return MomentSummary(m_x, sigma_x, m_z, sigma_z, gamma, var_y)


def interaction_features(x_row: np.ndarray, z_row: np.ndarray) -> np.ndarray:
    """``vec(x z~^T)`` with ``z~ = (1, z)``, i.e. ``z~ (x) x`` (x index fastest).

    Works row-wise on 2-d inputs as well.
    """
    x = np.asarray(x_row, dtype=np.float64)
    z = np.asarray(z_row, dtype=np.float64)
    if x.ndim == 1:
        zt = np.concatenate([[1.0], z.reshape(-1)])
        return np.kron(zt, x)
    n = x.shape[0]
    zt = np.hstack([np.ones((n, 1)), z.reshape(n, -1)])
    return (zt[:, :, None] * x[:, None, :]).reshape(n, -1)


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two matrices."""
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def make_folds(n: int, B: int, seed: int) -> FoldAssignment:
    """Shuffle ``range(n)`` with a dedicated stream and deal rows into ``B`` folds."""
    if B < 2 or B > n:
        raise DataError(f"fold count B={B} must satisfy 2 <= B <= n={n}")
    perm = named_rng(seed, "folds").permutation(n)
    fold = np.empty(n, dtype=np.int64)
    fold[perm] = np.arange(n) % B
    return FoldAssignment(fold, B)


# --------------------------------------------------------------------------- #
# Orthogonal polynomial basis
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class OrthogonalPolynomial:
    """Sample-orthonormal polynomial basis ``b_1(v), ..., b_k(v)``.

    Fitted on a reference sample; :meth:`transform` applies the same
    linear map to new values, so the basis is a fixed function after
    fitting.
    """

    degree: int
    loc: float
    scale: float
    monomial_means: np.ndarray
    coef: np.ndarray = field(repr=False)  # maps centred monomials to the basis

    @classmethod
    def fit(cls, values: np.ndarray, degree: int) -> "OrthogonalPolynomial":
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        n = v.shape[0]
        if degree < 1:
            raise DataError("basis degree must be >= 1")
        if n <= degree:
            raise DataError(f"need more than {degree} values for a degree-{degree} basis")
        scale = float(v.std())
        if not scale > 0:
            raise DataError("degenerate basis: input is constant")
        loc = float(v.mean())
        u = (v - loc) / scale
        mono = np.column_stack([u ** p for p in range(1, degree + 1)])
        means = mono.mean(axis=0)
        mc = mono - means
        _, r = np.linalg.qr(mc / math.sqrt(n))
        d = np.abs(np.diag(r))
        if np.any(d <= 1e-10 * max(1.0, d.max())):
            raise DataError("degenerate basis: too few distinct values for the requested degree")
        r = r * np.sign(np.diag(r))[:, None]
        coef = np.linalg.inv(r)
        return cls(degree, loc, scale, means, coef)

    def transform(self, values: np.ndarray) -> np.ndarray:
        u = (np.asarray(values, dtype=np.float64).reshape(-1) - self.loc) / self.scale
        mono = np.column_stack([u ** p for p in range(1, self.degree + 1)])
        return (mono - self.monomial_means) @ self.coef


def orthogonal_basis(values: np.ndarray, degree: int) -> np.ndarray:
    """Gram-Schmidt orthonormalised monomials ``v, ..., v^k`` (``B^T B / n = I``)."""
    return OrthogonalPolynomial.fit(values, degree).transform(values)


@dataclass(frozen=True)
class BasisExpansion:
    """Column-wise orthogonal polynomial expansion of an X block."""

    polys: tuple[OrthogonalPolynomial, ...]
    names: tuple[str, ...]

    @classmethod
    def fit(cls, x_block: np.ndarray, degree: int, names: Sequence[str] = ()) -> "BasisExpansion":
        x = np.asarray(x_block, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        base = list(names) or [f"x{j + 1}" for j in range(x.shape[1])]
        polys = tuple(OrthogonalPolynomial.fit(x[:, j], degree) for j in range(x.shape[1]))
        out = tuple(f"b{p}({nm})" for nm in base for p in range(1, degree + 1))
        return cls(polys, out)

    def transform(self, x_block: np.ndarray) -> np.ndarray:
        x = np.asarray(x_block, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        return np.hstack([p.transform(x[:, j]) for j, p in enumerate(self.polys)])


def expand_x(data: Dataset, degree: int) -> Dataset:
    """Replace X by its degree-``k`` orthogonal polynomial expansion."""
    basis = BasisExpansion.fit(data.x_block, degree, data.x_names)
    return data.with_x(basis.transform(data.x_block), basis.names)
