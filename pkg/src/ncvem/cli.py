"""Experiment driver: convergence sweeps over mesh families, degrees and stabilizations."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .exceptions import ConfigError, NcvemError
from .mesh import generate_mesh, load_mesh, mesh_stats
from .stab import StabKind
from .vem.system import Discretization, assemble, compute_errors, solve

FAMILIES = ("hexa", "nside", "dyadic")
CSV_FIELDS = (
    "family", "level", "k", "stab", "N_el", "N_ed", "h", "h_min", "gamma_h",
    "e0", "e1", "rate0", "rate1", "wall_ms",
)
SOLVE_RTOL = 1e-11


def exact_solution(x, y):
    return np.cos(np.pi * x) * np.cos(np.pi * y) / (2.0 * np.pi**2)


def exact_gradient(x, y):
    c = 1.0 / (2.0 * np.pi)
    return (
        -c * np.sin(np.pi * x) * np.cos(np.pi * y),
        -c * np.cos(np.pi * x) * np.sin(np.pi * y),
    )


def exact_load(x, y):
    return np.cos(np.pi * x) * np.cos(np.pi * y)


def patch_solution(x, y):
    return x + y


def patch_gradient(x, y):
    return np.ones_like(x), np.ones_like(y)


@dataclass
class ExperimentConfig:
    family: str = "dyadic"
    levels: list = field(default_factory=lambda: [1])
    k: list = field(default_factory=lambda: [1])
    stab: list = field(default_factory=lambda: ["rlb"])
    shrink: float = 0.5
    growth: bool = False
    mesh_file: str | None = None
    patch_test: bool = False
    solver: str = "auto"
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        if self.mesh_file is None and self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {', '.join(FAMILIES)}")
        if not self.levels or any(int(v) < 1 for v in self.levels):
            raise ConfigError("levels must be positive integers")
        if not self.k or any(int(v) not in (1, 2, 3, 4) for v in self.k):
            raise ConfigError("k values must lie in 1..4")
        try:
            self.stab = [StabKind.parse(s).value for s in self.stab]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0.0 < float(self.shrink) <= 1.0:
            raise ConfigError("shrink must lie in (0, 1]")
        if self.solver not in ("auto", "direct", "cg"):
            raise ConfigError("solver must be auto, direct or cg")
        self.levels = sorted({int(v) for v in self.levels})
        self.k = sorted({int(v) for v in self.k})
        return self


@dataclass
class ReportRow:
    family: str
    level: int
    k: int
    stab: str
    N_el: int | None = None
    N_ed: int | None = None
    h: float | None = None
    h_min: float | None = None
    gamma_h: float | None = None
    e0: float | None = None
    e1: float | None = None
    rate0: float | None = None
    rate1: float | None = None
    wall_ms: float | None = None
    error: str | None = None


@dataclass
class ExperimentReport:
    rows: list
    metadata: dict

    @property
    def failed(self) -> bool:
        return any(r.error is not None for r in self.rows)


def _rate(e_prev, e_cur, h_prev, h_cur):
    if None in (e_prev, e_cur, h_prev, h_cur) or e_prev <= 0 or e_cur <= 0 or h_prev == h_cur:
        return None
    return math.log(e_prev / e_cur) / math.log(h_prev / h_cur)


def _fill_rates(rows) -> None:
    groups: dict = {}
    for row in rows:
        groups.setdefault((row.family, row.k, row.stab), []).append(row)
    for group in groups.values():
        group.sort(key=lambda r: r.level)
        for prev, cur in zip(group, group[1:]):
            cur.rate0 = _rate(prev.e0, cur.e0, prev.h, cur.h)
            cur.rate1 = _rate(prev.e1, cur.e1, prev.h, cur.h)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Solve every (level, k, stab) combination and collect errors and rates.

    A failing combination is recorded with its error message and the run
    continues.
    """
    config.validate()
    if config.patch_test:
        u, grad_u, f = patch_solution, patch_gradient, None
    else:
        u, grad_u, f = exact_solution, exact_gradient, exact_load
    family = "file" if config.mesh_file else config.family
    levels = [0] if config.mesh_file else config.levels
    rows = []
    for level in levels:
        try:
            if config.mesh_file:
                mesh = load_mesh(config.mesh_file)
            else:
                mesh = generate_mesh(family, level, shrink=config.shrink, growth=config.growth)
            stats = mesh_stats(mesh)
        except (NcvemError, ValueError, OSError) as exc:
            for k in config.k:
                for stab in config.stab:
                    rows.append(ReportRow(family, level, k, stab, error=str(exc)))
            continue
        base = dict(N_el=stats.N_el, N_ed=stats.N_ed, h=stats.h, h_min=stats.h_min, gamma_h=stats.gamma_h)
        for k in config.k:
            disc = None
            for stab in config.stab:
                row = ReportRow(family, level, k, stab, **base)
                start = time.perf_counter()
                try:
                    disc = disc or Discretization(mesh, k)
                    system = assemble(disc, stab, f=f, g=u)
                    uh = solve(system, method=config.solver, rtol=SOLVE_RTOL)
                    row.e0, row.e1 = compute_errors(disc, uh, u, grad_u)
                except (NcvemError, ValueError, np.linalg.LinAlgError) as exc:
                    row.error = f"{type(exc).__name__}: {exc}"
                row.wall_ms = 1000.0 * (time.perf_counter() - start)
                rows.append(row)
    _fill_rates(rows)
    rows.sort(key=lambda r: (r.family, r.level, r.k, r.stab))
    metadata = {
        "seed": config.seed,
        "version": __version__,
        "solve_rtol": SOLVE_RTOL,
        "patch_test": config.patch_test,
        "shrink": config.shrink,
    }
    return ExperimentReport(rows, metadata)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def _num(value):
    if value is None or isinstance(value, (str, int)):
        return value
    return float(f"{float(value):.9g}")


def report_csv(report: ExperimentReport, timing: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in report.rows:
        values = [getattr(row, name) for name in CSV_FIELDS]
        if not timing:
            values[-1] = None
        writer.writerow([_fmt(v) for v in values])
    return buf.getvalue()


def report_json(report: ExperimentReport, timing: bool = True) -> str:
    rows = []
    for row in report.rows:
        entry = {name: _num(getattr(row, name)) for name in CSV_FIELDS}
        if not timing:
            entry["wall_ms"] = None
        if row.error is not None:
            entry["error"] = row.error
        rows.append(entry)
    return json.dumps({"metadata": report.metadata, "rows": rows}, indent=2) + "\n"


def emit_report(report: ExperimentReport, format: str = "csv", path=None, timing: bool = True) -> str:
    """Write the report as CSV or JSON to ``path`` (stdout when ``None`` or ``-``)."""
    if format == "csv":
        text = report_csv(report, timing)
    elif format == "json":
        text = report_json(report, timing)
    else:
        raise ConfigError(f"unknown format {format!r}")
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _comma_list(convert):
    def parse(text):
        try:
            return [convert(t) for t in str(text).split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ncvem", description="Nonconforming VEM convergence experiments on polygonal meshes.")
    p.add_argument("--config", help="JSON file with any of the options below; flags win")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--levels", type=_comma_list(int), help="comma list of mesh levels")
    p.add_argument("--k", type=_comma_list(int), help="comma list of degrees in 1..4")
    p.add_argument("--stab", type=_comma_list(str), help="comma list of dofi,l2,slb,rlb,wav")
    p.add_argument("--shrink", type=float, help="edge shrink factor of the hexa family")
    p.add_argument("--growth", action="store_true", default=None, help="growing edge counts for nside")
    p.add_argument("--mesh-file", help="JSON mesh to use instead of a generated family")
    p.add_argument("--patch-test", action="store_true", default=None, help="use u = x + y")
    p.add_argument("--solver", choices=("auto", "direct", "cg"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-timing", action="store_true", help="leave wall_ms empty for reproducible output")
    p.add_argument("--diagnostics", metavar="PATH", help="write stabilization diagnostics as JSON")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def config_from_args(args) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data = {key.replace("-", "_"): value for key, value in data.items()}
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - names - {"out", "format", "diagnostics", "no_timing"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values = {key: value for key, value in data.items() if key in names}
    for name in names:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    for name in ("levels", "k", "stab"):
        if name in values and not isinstance(values[name], list):
            values[name] = _comma_list(str if name == "stab" else int)(values[name])
    try:
        return ExperimentConfig(**values).validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = config_from_args(args)
    except ConfigError as exc:
        print(f"ncvem: {exc}", file=sys.stderr)
        return 1
    if args.diagnostics:
        from .diagnostics import run_diagnostics

        diag = run_diagnostics(
            family=config.family,
            levels=config.levels,
            k=config.k[0],
            shrink=config.shrink,
            seed=config.seed,
        )
        text = json.dumps(diag, indent=2, default=_json_default) + "\n"
        if args.diagnostics == "-":
            sys.stdout.write(text)
        else:
            with open(args.diagnostics, "w", encoding="utf-8") as fh:
                fh.write(text)
    report = run_experiment(config)
    try:
        emit_report(report, args.format, args.out, timing=not args.no_timing)
    except OSError as exc:
        print(f"ncvem: {exc}", file=sys.stderr)
        return 1
    return 2 if report.failed else 0


if __name__ == "__main__":
    sys.exit(main())
