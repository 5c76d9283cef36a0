"""Nuisance regression family selection and its JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass

FAMILIES = ("linear", "additive", "forest")

_ADDITIVE_KEYS = ("knots_per_dim", "spline_degree", "ridge_grid")
_FOREST_KEYS = ("n_trees", "min_leaf", "mtry_fraction", "bootstrap")

DEFAULT_RIDGE_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


@dataclass(frozen=True)
class NuisanceSpec:
    """Which regression family to use for mu(z), nu(z), mu(x, z) and friends.

    Only the parameters of the selected family are meaningful; the
    others keep their defaults and are dropped from the JSON form.
    """

    family: str = "linear"
    knots_per_dim: int = 10
    spline_degree: int = 3
    ridge_grid: tuple[float, ...] = DEFAULT_RIDGE_GRID
    n_trees: int = 200
    min_leaf: int = 5
    mtry_fraction: float = 1 / 3
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown nuisance family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "ridge_grid", tuple(float(r) for r in self.ridge_grid))
        if self.knots_per_dim < 1 or self.spline_degree < 1:
            raise ValueError("knots_per_dim and spline_degree must be positive")
        if any(r < 0 for r in self.ridge_grid) or not self.ridge_grid:
            raise ValueError("ridge_grid must be a non-empty list of nonnegative penalties")
        if self.n_trees < 1 or self.min_leaf < 1 or not 0 < self.mtry_fraction <= 1:
            raise ValueError("invalid forest parameters")

    def to_dict(self) -> dict:
        out: dict = {"family": self.family}
        if self.family == "additive":
            out.update(knots_per_dim=self.knots_per_dim, spline_degree=self.spline_degree,
                       ridge_grid=list(self.ridge_grid))
        elif self.family == "forest":
            out.update(n_trees=self.n_trees, min_leaf=self.min_leaf,
                       mtry_fraction=self.mtry_fraction, bootstrap=self.bootstrap)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "NuisanceSpec":
        d = dict(d)
        family = d.pop("family", "linear")
        allowed = {"additive": _ADDITIVE_KEYS, "forest": _FOREST_KEYS}.get(family, ())
        stray = sorted(set(d) - set(allowed))
        if stray:
            raise ValueError(f"keys {stray} are not parameters of the {family!r} family")
        if "ridge_grid" in d:
            d["ridge_grid"] = tuple(d["ridge_grid"])
        return cls(family=family, **d)

    @classmethod
    def from_json(cls, text: str) -> "NuisanceSpec":
        return cls.from_dict(json.loads(text))
