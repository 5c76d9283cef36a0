"""Command-line entry point: ``decorrvi {estimate,simulate,oracle,report}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
(every fold singular for some parameter, or an unrecoverable solve).

``estimate`` and ``simulate`` write a ``manifest.json`` next to their
outputs holding the fully resolved configuration, the seed and library
versions.  Passing it back with ``--manifest`` reproduces the result
files byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from decorrvi import __version__
from decorrvi.data import expand_x, load_csv, make_folds, parse_selector
from decorrvi.errors import DataError, DecorrError, NumericalError, UnsupportedParameterError
from decorrvi.estimators import PARAMETERS, EstimatorConfig, Nuisances
from decorrvi.inference import DEFAULT_ALPHA, DEFAULT_B, combine, cross_fit, default_c, to_json
from decorrvi.nuisance import FAMILIES, NuisanceSpec

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
MANIFEST = "manifest.json"
DEFAULT_PARAMS = "psi_L,psi_2,psi_3"


class UsageError(Exception):
    """Bad flags or an invalid combination of options."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(message)


@dataclass
class RunConfig:
    """Resolved options for one CLI run; everything but ``command`` has a default."""

    command: str
    data: str | None = None
    x: str = "x1"
    z: str | None = None  # None: every other column
    y: str = "y"
    params: tuple[str, ...] = tuple(DEFAULT_PARAMS.split(","))
    nuisance: str = "linear"
    B: int = DEFAULT_B
    alpha: float = DEFAULT_ALPHA
    c: float | None = None
    t: float = 0.5
    clip_max: float = 50.0
    mc_draws: int = 1000
    psi0_one_step: bool = False
    basis_degree: int = 0
    seed: int = 0
    study: dict | None = None
    example: int = 1
    param: str = "psi_0"
    delta: float = 0.0
    report: str | None = None
    out: str | None = None
    workers: int | None = None

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(screen_threshold=self.t, clip_max=self.clip_max, mc_draws=self.mc_draws,
                               psi0_one_step=self.psi0_one_step)


def _versions() -> dict:
    import numba
    import scipy

    return {"decorrvi": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _manifest(cfg: RunConfig, resolved: dict) -> str:
    body = {"command": cfg.command, "seed": cfg.seed, "config": resolved, "versions": _versions()}
    return to_json(body, indent=2) + "\n"


def _sha256(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    return p


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #

def _header(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [h.strip() for h in fh.readline().rstrip("\r\n").split(",")]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _estimate(cfg: RunConfig) -> int:
    if not cfg.data:
        raise UsageError("estimate needs --data")
    unknown = [p for p in cfg.params if p not in PARAMETERS]
    if unknown:
        raise UsageError(f"unknown parameter(s) {unknown}; choose from {list(PARAMETERS)}")
    if cfg.nuisance not in FAMILIES:
        raise UsageError(f"unknown nuisance family {cfg.nuisance!r}")
    if cfg.B < 2:
        raise UsageError("--B must be at least 2")
    if not 0 < cfg.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    x_names = parse_selector(cfg.x)
    if cfg.z is None:
        taken = set(x_names) | {cfg.y}
        z_names = [h for h in _header(cfg.data) if h not in taken]
    else:
        z_names = parse_selector(cfg.z)
    data = load_csv(cfg.data, x_names, z_names, cfg.y)
    if cfg.basis_degree > 0:
        data = expand_x(data, cfg.basis_degree)
    spec = NuisanceSpec(cfg.nuisance)
    econf = cfg.estimator_config()
    nuis = Nuisances(data, make_folds(data.n, cfg.B, cfg.seed), spec, cfg.seed)
    c = default_c(data) if cfg.c is None else float(cfg.c)
    results, all_singular = [], []
    for pid in cfg.params:
        folds = cross_fit(pid, nuis, econf)
        if all(f.singular for f in folds):
            all_singular.append(pid)
        results.append(combine(pid, folds, c, data.n, cfg.alpha).to_dict())
    text = to_json({"results": results}, indent=2) + "\n"
    resolved = {
        "data": cfg.data, "data_sha256": _sha256(cfg.data), "x": x_names, "z": z_names, "y": cfg.y,
        "params": list(cfg.params), "nuisance": spec.to_dict(), "B": cfg.B, "alpha": cfg.alpha, "c": cfg.c,
        "t": cfg.t, "clip_max": cfg.clip_max, "mc_draws": cfg.mc_draws, "psi0_one_step": cfg.psi0_one_step,
        "basis_degree": cfg.basis_degree, "seed": cfg.seed,
    }
    if cfg.out:
        out = Path(cfg.out)
        _write(out, "estimates.json", text)
        _write(out, MANIFEST, _manifest(cfg, resolved))
    else:
        sys.stdout.write(text)
    if all_singular:
        print(f"error: every fold singular for {all_singular}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _simulate(cfg: RunConfig) -> int:
    from decorrvi.simlab.coverage import StudyConfig, run_coverage

    try:
        study = StudyConfig.from_dict(cfg.study or {})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid study configuration: {exc}") from None
    report = run_coverage(study, cfg.seed, cfg.workers)
    out = Path(cfg.out or "simulate-out")
    report.write(out)
    _write(out, "timing.json", json.dumps({"wall_time_seconds": report.wall_time}) + "\n")
    _write(out, MANIFEST, _manifest(cfg, {"study": study.to_dict(), "seed": cfg.seed}))
    failed = [r for r in report.rows if r["failed_cell"]]
    for r in failed:
        print(f"warning: cell example={r['example']} nuisance={r['nuisance']} parameter={r['parameter']} "
              f"delta={r['delta']} failed in {r['failed']}/{r['replicates']} replicates", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_OK


def _oracle(cfg: RunConfig) -> int:
    from decorrvi.simlab.oracle import true_psi

    try:
        value = true_psi(cfg.example, cfg.param, cfg.delta)
    except UnsupportedParameterError as exc:
        raise UsageError(str(exc)) from None
    print(repr(float(value)))
    return EXIT_OK


def format_report(report: dict) -> str:
    """Fixed-width table of a coverage report's rows."""
    cols = ("example", "nuisance", "parameter", "delta", "true_value", "coverage",
            "ci_low_mean", "ci_high_mean", "width_mean", "replicates", "failed")
    rows = report.get("rows", [])
    if not rows:
        return "(empty report)"

    def cell(v) -> str:
        if v is None:
            return "nan"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    table = [list(cols)] + [[cell(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(line[j]) for line in table) for j in range(len(cols))]
    lines = ["  ".join(v.rjust(w) for v, w in zip(line, widths)) for line in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _report(cfg: RunConfig) -> int:
    if not cfg.report:
        raise UsageError("report needs a report.json path")
    try:
        report = json.loads(Path(cfg.report).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {cfg.report}: {exc}") from None
    print(format_report(report))
    return EXIT_OK


COMMANDS = {"estimate": _estimate, "simulate": _simulate, "oracle": _oracle, "report": _report}


# --------------------------------------------------------------------------- #
# Argument parsing
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="decorrvi", description="Decorrelated variable importance estimation.")
    p.add_argument("--version", action="version", version=f"decorrvi {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", help="estimate parameters on a CSV file")
    e.add_argument("--data", help="CSV file with a header row")
    e.add_argument("--x", default="x1", help="covariates of interest, e.g. x1 or x1,x2 (default x1)")
    e.add_argument("--z", default=None, help="other covariates, e.g. z1..z5 (default: all other columns)")
    e.add_argument("--y", default="y", help="response column (default y)")
    e.add_argument("--params", default=DEFAULT_PARAMS, help=f"comma-separated ids from {', '.join(PARAMETERS)}")
    e.add_argument("--nuisance", default="linear", help=f"one of {', '.join(FAMILIES)}")
    e.add_argument("--B", type=int, default=DEFAULT_B, help="number of folds")
    e.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    e.add_argument("--c", type=float, default=None, help="variance floor (default: sample Var(Y) squared)")
    e.add_argument("--t", type=float, default=0.5, help="screening threshold for psi_1")
    e.add_argument("--clip-max", type=float, default=50.0, help="density-ratio clip for psi_0 and rho_0")
    e.add_argument("--mc-draws", type=int, default=1000, help="Monte Carlo draws for psi_0 and rho_0")
    e.add_argument("--one-step", action="store_true", help="one-step form of psi_0")
    e.add_argument("--basis-degree", type=int, default=0,
                   help="replace X by orthogonal polynomials of this degree (0: off)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default=None, help="output directory (default: print JSON)")
    e.add_argument("--manifest", default=None, help="re-run from a manifest.json")

    s = sub.add_parser("simulate", help="run a coverage study")
    s.add_argument("--study", default=None, help="study JSON (default: the delta sweep for example 1)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="simulate-out")
    s.add_argument("--workers", type=int, default=None, help="process count (default $DECORRVI_WORKERS or 1)")
    s.add_argument("--manifest", default=None, help="re-run from a manifest.json")

    o = sub.add_parser("oracle", help="print a true parameter value")
    o.add_argument("--example", type=int, default=1)
    o.add_argument("--param", default="psi_0")
    o.add_argument("--delta", type=float, default=0.0)

    r = sub.add_parser("report", help="print a coverage report as a table")
    r.add_argument("report", help="path to report.json")
    return p


def _from_manifest(command: str, path: str, out: str | None) -> RunConfig:
    try:
        m = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from None
    if m.get("command") != command:
        raise UsageError(f"manifest is for {m.get('command')!r}, not {command!r}")
    conf = m["config"]
    if command == "simulate":
        return RunConfig("simulate", study=conf["study"], seed=conf["seed"], out=out)
    nuis = conf["nuisance"]["family"] if isinstance(conf["nuisance"], dict) else conf["nuisance"]
    if Path(conf["data"]).is_file() and _sha256(conf["data"]) != conf.get("data_sha256"):
        print("warning: data file changed since the manifest was written", file=sys.stderr)
    return RunConfig("estimate", data=conf["data"], x=",".join(conf["x"]), z=",".join(conf["z"]), y=conf["y"],
                     params=tuple(conf["params"]), nuisance=nuis, B=conf["B"], alpha=conf["alpha"], c=conf["c"],
                     t=conf["t"], clip_max=conf["clip_max"], mc_draws=conf["mc_draws"],
                     psi0_one_step=conf["psi0_one_step"], basis_degree=conf["basis_degree"],
                     seed=conf["seed"], out=out)


def parse_config(argv: Sequence[str]) -> RunConfig:
    ns = build_parser().parse_args(list(argv))
    if ns.command == "estimate":
        if ns.manifest:
            return _from_manifest("estimate", ns.manifest, ns.out)
        params = tuple(p.strip() for p in ns.params.split(",") if p.strip())
        return RunConfig("estimate", data=ns.data, x=ns.x, z=ns.z, y=ns.y, params=params, nuisance=ns.nuisance,
                         B=ns.B, alpha=ns.alpha, c=ns.c, t=ns.t, clip_max=ns.clip_max, mc_draws=ns.mc_draws,
                         psi0_one_step=ns.one_step, basis_degree=ns.basis_degree, seed=ns.seed, out=ns.out)
    if ns.command == "simulate":
        if ns.manifest:
            cfg = _from_manifest("simulate", ns.manifest, ns.out)
            cfg.workers = ns.workers
            return cfg
        study = None
        if ns.study:
            try:
                study = json.loads(Path(ns.study).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read study {ns.study}: {exc}") from None
        return RunConfig("simulate", study=study, seed=ns.seed, out=ns.out, workers=ns.workers)
    if ns.command == "oracle":
        return RunConfig("oracle", example=ns.example, param=ns.param, delta=ns.delta)
    return RunConfig("report", report=ns.report)


def run(cfg: RunConfig) -> int:
    """Execute a resolved configuration and return the exit status."""
    try:
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UnsupportedParameterError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DecorrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
