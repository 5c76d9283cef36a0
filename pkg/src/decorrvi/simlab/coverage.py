"""Coverage studies: repeat generate -> cross-fit -> t-Cross and tally hits.

Each replicate's data seed depends only on ``(seed, example, delta,
replicate)``, so the same data are shared by every nuisance family and
parameter, and results do not depend on the order in which replicates
run.  A replicate-level failure is recorded and excluded from the
coverage rate; a cell with more than 20% failures is marked.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from decorrvi.data import make_folds
from decorrvi.errors import DecorrError
from decorrvi.estimators import EstimatorConfig, Nuisances
from decorrvi.inference import DEFAULT_ALPHA, DEFAULT_B, combine, cross_fit, default_c, to_json
from decorrvi.nuisance import NuisanceSpec
from decorrvi.rng import named_int
from decorrvi.simlab.generators import GeneratorConfig, generate
from decorrvi.simlab.oracle import true_psi

WORKERS_ENV = "DECORRVI_WORKERS"
DELTA_GRID = (0.0, 0.5, 1.0, 2.0, 3.0)
FAILED_CELL_FRACTION = 0.20

REPLICATE_COLUMNS = ("example", "nuisance", "parameter", "delta", "replicate", "estimate", "se",
                     "ci_low", "ci_high", "covered", "true_value", "infinite", "error")
PLOT_COLUMNS = ("example", "nuisance", "parameter", "delta", "ci_low_mean", "ci_high_mean", "coverage")


@dataclass(frozen=True)
class StudyConfig:
    """A grid of examples x nuisance families x parameters.

    ``deltas`` applies to example 1 only; other examples run once with
    delta 0.  ``target`` is ``"psi_0"`` (every interval is judged against
    the decorrelated value) or ``"own"`` (each parameter's own value).
    """

    examples: tuple[int, ...] = (1,)
    families: tuple[str, ...] = ("linear",)
    parameters: tuple[str, ...] = ("psi_L", "psi_2", "psi_3")
    n: int = 2000
    replicates: int = 100
    deltas: tuple[float, ...] = DELTA_GRID
    B: int = DEFAULT_B
    alpha: float = DEFAULT_ALPHA
    c: float | None = None
    target: str = "psi_0"
    basis_expand: bool | None = None
    estimator: EstimatorConfig = EstimatorConfig()

    def __post_init__(self) -> None:
        if self.target not in ("psi_0", "own"):
            raise ValueError("target must be 'psi_0' or 'own'")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")

    def cells(self) -> list[tuple[int, float]]:
        out = []
        for ex in self.examples:
            for d in (self.deltas if ex == 1 else (0.0,)):
                out.append((int(ex), float(d)))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimator"] = asdict(self.estimator)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown study keys: {sorted(unknown)}")
        kw = dict(d)
        for key in ("examples", "families", "parameters", "deltas"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "estimator" in kw:
            kw["estimator"] = EstimatorConfig(**kw["estimator"])
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "StudyConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class CoverageReport:
    """Per-cell summaries plus the raw replicate records.

    ``wall_time`` is kept out of :meth:`to_dict` so that reports from
    identical runs are byte-identical.
    """

    config: StudyConfig
    seed: int
    rows: list[dict] = field(default_factory=list)
    replicates: list[dict] = field(default_factory=list)
    wall_time: float = 0.0

    def row(self, example: int, nuisance: str, parameter: str, delta: float = 0.0) -> dict:
        for r in self.rows:
            if (r["example"], r["nuisance"], r["parameter"], r["delta"]) == (example, nuisance, parameter, delta):
                return r
        raise KeyError((example, nuisance, parameter, delta))

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "seed": self.seed, "rows": self.rows}

    def to_json(self) -> str:
        return to_json(self.to_dict(), indent=2)

    def replicate_csv(self) -> str:
        return _csv(REPLICATE_COLUMNS, self.replicates)

    def plot_csv(self) -> str:
        return _csv(PLOT_COLUMNS, self.rows)

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"report": out / "report.json", "replicates": out / "replicates.csv",
                 "plot_data": out / "plot_data.csv"}
        paths["report"].write_text(self.to_json() + "\n")
        paths["replicates"].write_text(self.replicate_csv())
        paths["plot_data"].write_text(self.plot_csv())
        return paths


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ("nan" if np.isnan(v) else ("inf" if v > 0 else "-inf"))
    return "" if v is None else str(v)


def _csv(columns: Sequence[str], records: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _target(cfg: StudyConfig, example: int, parameter: str, delta: float) -> float:
    return true_psi(example, "psi_0" if cfg.target == "psi_0" else parameter, delta)


def _run_task(args) -> list[dict]:
    cfg, seed, example, delta, rep = args
    data_seed = named_int(seed, "replicate", example, delta, rep)
    data = generate(GeneratorConfig(example, cfg.n, delta, data_seed, cfg.basis_expand))
    c = default_c(data) if cfg.c is None else cfg.c
    folds = make_folds(data.n, cfg.B, data_seed)
    records = []
    for fam in cfg.families:
        nuis = Nuisances(data, folds, NuisanceSpec(fam), data_seed)
        for param in cfg.parameters:
            rec = {"example": example, "nuisance": fam, "parameter": param, "delta": delta,
                   "replicate": rep, "true_value": _target(cfg, example, param, delta), "error": ""}
            try:
                res = combine(param, cross_fit(param, nuis, cfg.estimator), c, data.n, cfg.alpha)
            except (DecorrError, np.linalg.LinAlgError, ValueError) as exc:
                rec.update(estimate=float("nan"), se=float("nan"), ci_low=float("nan"),
                           ci_high=float("nan"), covered=False, infinite=False,
                           error=f"{type(exc).__name__}: {exc}")
            else:
                rec.update(estimate=res.psi_bar, se=res.se, ci_low=res.ci_low, ci_high=res.ci_high,
                           covered=res.covers(rec["true_value"]), infinite=res.infinite_flag)
            records.append(rec)
    return records


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _summarize(cfg: StudyConfig, records: list[dict]) -> list[dict]:
    rows = []
    for example, delta in cfg.cells():
        for fam in cfg.families:
            for param in cfg.parameters:
                cell = [r for r in records if r["example"] == example and r["delta"] == delta
                        and r["nuisance"] == fam and r["parameter"] == param]
                ok = [r for r in cell if not r["error"]]
                finite = [r for r in ok if not r["infinite"]]
                failed = len(cell) - len(ok)
                rows.append({
                    "example": example, "nuisance": fam, "parameter": param, "delta": delta,
                    "true_value": cell[0]["true_value"] if cell else float("nan"),
                    "replicates": len(cell),
                    "succeeded": len(ok),
                    "failed": failed,
                    "failed_cell": failed > FAILED_CELL_FRACTION * max(len(cell), 1),
                    "infinite": len(ok) - len(finite),
                    "coverage": float(np.mean([r["covered"] for r in ok])) if ok else float("nan"),
                    "estimate_mean": float(np.mean([r["estimate"] for r in ok])) if ok else float("nan"),
                    "ci_low_mean": float(np.mean([r["ci_low"] for r in finite])) if finite else float("nan"),
                    "ci_high_mean": float(np.mean([r["ci_high"] for r in finite])) if finite else float("nan"),
                    "width_mean": (float(np.mean([r["ci_high"] - r["ci_low"] for r in finite]))
                                   if finite else float("nan")),
                })
    return rows


def run_coverage(cfg: StudyConfig, seed: int = 0, workers: int | None = None) -> CoverageReport:
    """Run every cell of ``cfg``; worker count defaults to ``$DECORRVI_WORKERS`` (else 1).

    Raises:
        UnsupportedParameterError: a parameter has no known true value for an example.
    """
    start = time.perf_counter()
    for ex, d in cfg.cells():
        for param in cfg.parameters:
            _target(cfg, ex, param, d)  # raises for a combination without a known value
    tasks = [(cfg, seed, ex, d, rep) for ex, d in cfg.cells() for rep in range(cfg.replicates)]
    if not cfg.parameters or not cfg.families:
        tasks = []
    n_workers = _workers() if workers is None else max(1, workers)
    if n_workers > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(n_workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    rows = _summarize(cfg, records) if tasks else []
    return CoverageReport(cfg, seed, rows, records, time.perf_counter() - start)
