"""Command-line front end: single runs, sweeps, and comparison against the
reference iteration counts shipped in ``data/reference_tables.txt``."""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import re as _re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .assembly import dump_matrices, update_pressure_convection
from .driver import CavityProblem, CavitySolver, SolveReport, round_half_up, run_cavity
from .grid import PAIRS, normalize_pair
from .precond import LSC_KINDS, UnsupportedConfiguration, check_supported, normalize_kind

log = logging.getLogger(__name__)

CSV_FIELDS = ("elements", "h", "re", "rho_ratio", "mu_ratio", "alpha", "dt", "precond",
              "picard_steps", "avg_gmres", "max_gmres", "final_nl_rel_residual",
              "wall_time_s", "converged")

CLI_KEYS = ("pcd", "cc", "gcc", "pcd-visc", "pcd2-rho", "pcd2",
            "lsc", "lsc-d", "lsc2", "simple", "exact")

# Coarsest h excluded from default comparisons, per element pair.
COARSE_LIMIT = {"Q2Q1": Fraction(1, 64), "Q2Pm1": Fraction(1, 64), "Q1Q1": Fraction(1, 128)}


def parse_number(text: str) -> float:
    """Parse '0.25', '1/16', '1.2e-3' or '10^1.5'."""
    s = str(text).strip()
    if "^" in s:
        base, exp = s.split("^", 1)
        return float(parse_number(base)) ** float(parse_number(exp))
    if "/" in s:
        return float(Fraction(s))
    return float(s)


def _canon(x) -> float:
    return float(f"{float(x):.10g}")


def precond_label(kind: str, lsc_scaling: str = "max") -> str:
    """CSV label for a strategy; LSC_D records which scaling produced it."""
    kind = normalize_kind(kind)
    if kind == "lsc_d" and lsc_scaling == "diag":
        return "lsc_d:diag"
    return kind


def _base_kind(label: str) -> str:
    return normalize_kind(label.split(":", 1)[0])


def cell_key(elements, h, re, rho_ratio, mu_ratio, alpha, dt, precond) -> tuple:
    alpha = int(alpha)
    return (normalize_pair(elements), _canon(h), _canon(re), _canon(rho_ratio),
            _canon(mu_ratio), alpha, _canon(dt) if alpha else None, _base_kind(precond))


# -- reference tables ------------------------------------------------------

@dataclass(frozen=True)
class Policy:
    abs_tol: float
    rel_tol: float = 0.0

    def tolerance(self, expected: float) -> float:
        return max(self.abs_tol, self.rel_tol * expected)


@dataclass(frozen=True)
class ReferenceCell:
    table: str
    params: dict
    precond: str
    expected: int

    @property
    def key(self) -> tuple:
        p = self.params
        return cell_key(p["elements"], p["h"], p["re"], p["rho_ratio"], p["mu_ratio"],
                        p.get("alpha", 0), p.get("dt", 1.0), self.precond)


@dataclass
class ReferenceTable:
    table_id: str
    fixed: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    row_key: str = ""
    col_key: str = ""
    columns: list = field(default_factory=list)
    row_values: list = field(default_factory=list)
    policies: dict = field(default_factory=dict)
    cells: list = field(default_factory=list)
    preconds: list = field(default_factory=list)

    def policy(self, precond: str) -> Policy:
        return self.policies.get(_base_kind(precond), Policy(0.0))


_NUMERIC_KEYS = ("h", "re", "rho_ratio", "mu_ratio", "dt")


def parse_reference_tables(text: str) -> dict[str, ReferenceTable]:
    tables: dict[str, ReferenceTable] = {}
    cur = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "table":
                cur = tables[rest[0]] = ReferenceTable(rest[0])
                continue
            if cur is None:
                raise ValueError("directive before any 'table'")
            if head == "columns":
                cur.col_key = rest[0]
                cur.columns = [parse_number(v) for v in rest[1:]]
            elif head == "rows":
                cur.row_key = rest[0]
            elif head == "policy":
                opts = dict(o.split("=", 1) for o in rest[1:])
                cur.policies[normalize_kind(rest[0])] = Policy(float(opts.get("abs", 0)),
                                                               float(opts.get("rel", 0)))
            elif head == "row":
                _parse_row(cur, rest)
            elif head in _NUMERIC_KEYS:
                cur.fixed[head] = parse_number(rest[0])
                cur.raw[head] = rest[0]
            elif head == "elements":
                cur.fixed[head] = normalize_pair(rest[0])
            elif head == "alpha":
                cur.fixed[head] = int(rest[0])
            else:
                raise ValueError(f"unknown directive {head!r}")
        except (ValueError, IndexError, KeyError) as exc:
            raise ValueError(f"reference tables, line {lineno}: {exc}") from exc
    return tables


def _parse_row(table: ReferenceTable, tokens):
    row_val = parse_number(tokens[0])
    table.row_values.append(row_val)
    kinds = [normalize_kind(k) for k in tokens[1].split("/")]
    for k in kinds:
        if k not in table.preconds:
            table.preconds.append(k)
    values = tokens[2:]
    if len(values) != len(table.columns):
        raise ValueError(f"expected {len(table.columns)} cells, got {len(values)}")
    for col_val, cell in zip(table.columns, values):
        if cell == "*":
            continue
        counts = cell.split("/")
        if len(counts) != len(kinds):
            raise ValueError(f"cell {cell!r} does not match {tokens[1]}")
        params = dict(table.fixed, **{table.row_key: row_val, table.col_key: col_val})
        params.setdefault("alpha", 0)
        params.setdefault("dt", 1.0)
        for k, n in zip(kinds, counts):
            if n == "*":
                continue
            table.cells.append(ReferenceCell(table.table_id, params, k, int(n)))


def load_reference_tables(path=None) -> dict[str, ReferenceTable]:
    if path is None:
        text = resources.files(__package__).joinpath("data/reference_tables.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_reference_tables(text)


# -- runs and CSV ----------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def csv_row(problem: CavityProblem, report: SolveReport) -> dict:
    return {
        "elements": problem.elements,
        "h": float(problem.h),
        "re": float(problem.reynolds),
        "rho_ratio": float(problem.rho_ratio),
        "mu_ratio": float(problem.mu_ratio),
        "alpha": int(problem.alpha),
        "dt": float(problem.dt),
        "precond": precond_label(problem.schur_kind, problem.lsc_scaling),
        "picard_steps": report.picard_steps,
        "avg_gmres": report.avg_gmres,
        "max_gmres": report.max_gmres,
        "final_nl_rel_residual": report.final_nl_rel_residual,
        "wall_time_s": round(report.wall_time, 3),
        "converged": report.converged,
    }


def write_csv(rows, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in CSV_FIELDS])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
        return list(reader)


def _row_key(r: dict) -> tuple:
    return cell_key(r["elements"], float(r["h"]), float(r["re"]), float(r["rho_ratio"]),
                    float(r["mu_ratio"]), int(r["alpha"]), float(r["dt"]), r["precond"])


def _sort_key(r: dict) -> tuple:
    k = _row_key(r)
    return (k[0], -k[1], k[2], k[3], k[4], k[5], k[6] or 0.0, str(r["precond"]))


def _failed_row(problem: CavityProblem, message: str) -> dict:
    report = SolveReport(failure=message)
    row = csv_row(problem, report)
    row["final_nl_rel_residual"] = math.nan
    return row


def run_point(problem: CavityProblem) -> dict:
    """Run one configuration; failures become a non-converged row."""
    try:
        report = run_cavity(problem)
    except Exception as exc:  # a failed point must not stop the sweep
        log.warning("point %s failed: %s", problem, exc)
        return _failed_row(problem, str(exc))
    if report.failure:
        log.warning("%s %s h=%s re=%s: %s", problem.elements, problem.schur_kind,
                    problem.h, problem.reynolds, report.failure)
    return csv_row(problem, report)


# -- sweeps ----------------------------------------------------------------

@dataclass
class SweepSpec:
    elements: str = "Q2Q1"
    h: list = field(default_factory=list)
    re: list = field(default_factory=list)
    rho_ratio: list = field(default_factory=lambda: [1.0])
    mu_ratio: list = field(default_factory=lambda: [1.0])
    dt: list = field(default_factory=lambda: [1.0])
    alpha: int = 0
    preconds: list = field(default_factory=list)
    output: str | None = None
    mask_upper: bool = True
    options: dict = field(default_factory=dict)

    def points(self) -> list[CavityProblem]:
        out = []
        dts = self.dt if self.alpha else self.dt[:1] or [1.0]
        for h, re, rr, mr, dt, k in itertools.product(self.h, self.re, self.rho_ratio,
                                                      self.mu_ratio, dts, self.preconds):
            if self.mask_upper and rr > mr * (1 + 1e-12):
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                out.append(CavityProblem(self.elements, h, re, rr, mr, self.alpha, dt, k,
                                         **self.options))
        return out


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[dict]:
    points = spec.points()
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(run_point, points))
    else:
        rows = [run_point(p) for p in points]
    rows.sort(key=_sort_key)
    if spec.output:
        with open(spec.output, "w", newline="") as fh:
            write_csv(rows, fh)
    return rows


def sweep_from_table(table: ReferenceTable, **overrides) -> SweepSpec:
    """A sweep over the grid of a reference table; keyword overrides replace lists."""
    f = table.fixed
    axes = {table.row_key: sorted(set(table.row_values)), table.col_key: list(table.columns)}
    kw = dict(elements=f["elements"], alpha=f.get("alpha", 0), preconds=list(table.preconds))
    for name in ("h", "re", "rho_ratio", "mu_ratio", "dt"):
        if name in axes:
            kw[name] = axes[name]
        elif name in f:
            kw[name] = [f[name]]
    if table.row_key == "h":
        kw["h"] = sorted(kw["h"], reverse=True)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return SweepSpec(**kw)


def _axis_label(key: str, value: float) -> str:
    if key == "h" or key == "dt":
        fr = Fraction(value).limit_denominator(4096)
        if fr.numerator == 1 and fr.denominator > 1:
            return f"1/{fr.denominator}"
        return f"{value:g}"
    lg = math.log10(value) if value > 0 else math.nan
    if key == "re" and abs(lg * 2 - round(lg * 2)) < 1e-9 and lg != round(lg):
        return f"10^{round(lg * 2) / 2:g}"
    return f"{value:g}"


def markdown_table(rows, row_key: str = "h", col_key: str = "re", preconds=None) -> str:
    """Publication-style grid: one line per ``row_key`` value, cells 'a / b / ...'."""
    preconds = preconds or list(dict.fromkeys(str(r["precond"]) for r in rows))
    index = {}
    for r in rows:
        index[(_canon(float(r[row_key])), _canon(float(r[col_key])), str(r["precond"]))] = r
    rvals = sorted({_canon(float(r[row_key])) for r in rows}, reverse=(row_key == "h"))
    cvals = sorted({_canon(float(r[col_key])) for r in rows})
    lines = [f"| {row_key} \\ {col_key} | " + " | ".join(_axis_label(col_key, c) for c in cvals)
             + " |", "|---" * (len(cvals) + 1) + "|"]
    for rv in rvals:
        cells = []
        for cv in cvals:
            parts = []
            for k in preconds:
                r = index.get((rv, cv, k))
                if r is None:
                    parts.append(None)
                elif str(r["converged"]).lower() != "true" and not int(r["picard_steps"]):
                    parts.append("x")
                else:
                    parts.append(str(round_half_up(float(r["avg_gmres"]))))
            cells.append("*" if all(p is None for p in parts)
                         else " / ".join(p or "-" for p in parts))
        lines.append(f"| {_axis_label(row_key, rv)} | " + " | ".join(cells) + " |")
    title = " / ".join(preconds)
    return f"Average GMRES iterations ({title})\n\n" + "\n".join(lines) + "\n"


# -- comparison ------------------------------------------------------------

@dataclass
class CellResult:
    cell: ReferenceCell
    status: str  # pass | fail | incomparable
    observed: int | None = None
    deviation: int | None = None
    tolerance: float | None = None
    converged: bool | None = None

    def line(self) -> str:
        c = self.cell
        p = c.params
        where = (f"{c.table} {p['elements']} h={_axis_label('h', p['h'])} "
                 f"re={_axis_label('re', p['re'])} rho={p['rho_ratio']:g} mu={p['mu_ratio']:g}")
        if p.get("alpha"):
            where += f" dt={_axis_label('dt', p['dt'])}"
        if self.status == "incomparable":
            return f"SKIP {where} {c.precond}: no matching run"
        note = "" if self.converged else " (picard not converged)"
        return (f"{self.status.upper()} {where} {c.precond}: expected {c.expected} "
                f"got {self.observed} ({self.deviation:+d}, tol {self.tolerance:g}){note}")


def compare(rows, table: ReferenceTable, include_fine: bool = False) -> list[CellResult]:
    by_key = {}
    for r in rows:
        by_key[_row_key(r)] = r
    out = []
    for cell in table.cells:
        if not include_fine:
            limit = COARSE_LIMIT[cell.params["elements"]]
            if cell.params["h"] < float(limit) * (1 - 1e-12):
                continue
        r = by_key.get(cell.key)
        if r is None:
            out.append(CellResult(cell, "incomparable"))
            continue
        obs = round_half_up(float(r["avg_gmres"]))
        tol = table.policy(cell.precond).tolerance(cell.expected)
        dev = obs - cell.expected
        ok = abs(dev) <= tol + 1e-12
        out.append(CellResult(cell, "pass" if ok else "fail", obs, dev, tol,
                              str(r["converged"]).lower() == "true"))
    return out


# -- CLI -------------------------------------------------------------------

def _numbers(values):
    return [parse_number(v) for v in values]


def _add_solver_options(p: argparse.ArgumentParser):
    p.add_argument("--tol", type=float, default=1e-6, help="GMRES relative tolerance")
    p.add_argument("--picard-max", type=int, default=50)
    p.add_argument("--picard-tol", type=float, default=1e-5)
    p.add_argument("--mass-solver", choices=("exact", "chebyshev"), default="exact")
    p.add_argument("--cheb-steps", type=int, default=3)
    p.add_argument("--lsc-scaling", choices=("max", "diag"), default="max")
    p.add_argument("--streamline-diffusion", action="store_true",
                   help="add streamline diffusion to the convection block (off by default)")


def _solver_options(args) -> dict:
    return dict(linear_tol=args.tol, picard_max=args.picard_max,
                picard_rel_tol=args.picard_tol, mass_solver=args.mass_solver,
                cheb_steps=args.cheb_steps, lsc_scaling=args.lsc_scaling,
                streamline_diffusion=args.streamline_diffusion)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twophase-cavity",
                                 description="Two-phase lid-driven cavity preconditioner benchmark")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one configuration and print a CSV row")
    run.add_argument("--elements", type=str.lower, choices=("q2q1", "q1q1", "q2pm1"), required=True)
    run.add_argument("--h", type=parse_number, required=True)
    run.add_argument("--re", type=parse_number, required=True)
    run.add_argument("--rho-ratio", type=parse_number, default=1.0)
    run.add_argument("--mu-ratio", type=parse_number, default=1.0)
    run.add_argument("--precond", choices=CLI_KEYS, required=True)
    run.add_argument("--alpha", type=int, choices=(0, 1), default=0)
    run.add_argument("--dt", type=parse_number, default=1.0)
    run.add_argument("--dump-matrices", metavar="DIR")
    run.add_argument("--seed", type=int, default=0,
                     help="accepted for reproducible scripting; the solver itself is deterministic")
    run.add_argument("--output", "-o", help="append the row to this CSV instead of stdout")
    _add_solver_options(run)

    sw = sub.add_parser("sweep", help="run a parameter grid")
    sw.add_argument("--table", help="take the grid from a reference table (T1, T2, ...)")
    sw.add_argument("--elements", type=str.lower, choices=("q2q1", "q1q1", "q2pm1"))
    sw.add_argument("--h", nargs="+")
    sw.add_argument("--re", nargs="+")
    sw.add_argument("--rho-ratio", nargs="+")
    sw.add_argument("--mu-ratio", nargs="+")
    sw.add_argument("--dt", nargs="+")
    sw.add_argument("--alpha", type=int, choices=(0, 1))
    sw.add_argument("--precond", nargs="+", choices=CLI_KEYS)
    sw.add_argument("--no-mask", action="store_true",
                    help="keep cells with rho_ratio > mu_ratio")
    sw.add_argument("--output", "-o", required=True)
    sw.add_argument("--markdown", help="also write a Markdown table here")
    sw.add_argument("--rows", default=None, help="row parameter for the Markdown table")
    sw.add_argument("--columns", default=None, help="column parameter for the Markdown table")
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--reference", help="alternative reference-table file")
    _add_solver_options(sw)

    cmp_ = sub.add_parser("compare", help="check a sweep CSV against a reference table")
    cmp_.add_argument("csv")
    cmp_.add_argument("--table", required=True)
    cmp_.add_argument("--reference", help="alternative reference-table file")
    cmp_.add_argument("--long", action="store_true",
                      help="also compare the fine-grid cells")
    return ap


def _cmd_run(args) -> int:
    opts = _solver_options(args)
    pair = normalize_pair(args.elements)
    try:
        check_supported(args.precond, pair)
    except UnsupportedConfiguration as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    problem = CavityProblem(pair, args.h, args.re, args.rho_ratio, args.mu_ratio, args.alpha,
                            args.dt, args.precond, **opts)
    solver = CavitySolver(problem)
    report = run_cavity(problem, solver)
    row = csv_row(problem, report)
    if args.output:
        path = Path(args.output)
        new = not path.exists() or path.stat().st_size == 0
        buf = io.StringIO()
        write_csv([row], buf)
        text = buf.getvalue()
        with open(path, "a", newline="") as fh:
            fh.write(text if new else text.split("\n", 1)[1])
    else:
        write_csv([row], sys.stdout)
    if args.dump_matrices:
        x = report.solution
        wind = None if x is None else solver.full_velocity(x[:solver.disc.n_free_vel])
        system = solver.system(wind)
        update_pressure_convection(solver.ops, system.wind)
        dump_matrices(args.dump_matrices, system, solver.ops)
    if report.failure:
        print(f"solver failure: {report.failure}", file=sys.stderr)
    return 0 if report.converged else 1


def _cmd_sweep(args) -> int:
    opts = _solver_options(args)
    overrides = dict(
        h=_numbers(args.h) if args.h else None,
        re=_numbers(args.re) if args.re else None,
        rho_ratio=_numbers(args.rho_ratio) if args.rho_ratio else None,
        mu_ratio=_numbers(args.mu_ratio) if args.mu_ratio else None,
        dt=_numbers(args.dt) if args.dt else None,
        alpha=args.alpha,
        preconds=[normalize_kind(k) for k in args.precond] if args.precond else None,
        elements=normalize_pair(args.elements) if args.elements else None,
    )
    row_key, col_key = args.rows or "h", args.columns or "re"
    if args.table:
        table = load_reference_tables(args.reference)[args.table]
        spec = sweep_from_table(table, **overrides)
        row_key, col_key = args.rows or table.row_key, args.columns or table.col_key
    else:
        if not overrides["elements"]:
            print("usage error: --elements is required without --table", file=sys.stderr)
            return 2
        spec = SweepSpec(**{k: v for k, v in overrides.items() if v is not None})
    spec.output = args.output
    spec.mask_upper = not args.no_mask
    spec.options = opts
    bad = [k for k in spec.preconds if k in LSC_KINDS and spec.elements == "Q1Q1"]
    if bad:
        print(f"usage error: {bad[0]} is not available for Q1Q1 (stabilised, C != 0)",
              file=sys.stderr)
        return 2
    rows = run_sweep(spec, args.workers)
    if args.markdown:
        Path(args.markdown).write_text(markdown_table(rows, row_key, col_key,
                                                      [precond_label(k, args.lsc_scaling)
                                                       for k in spec.preconds]))
    failed = sum(str(r["converged"]).lower() != "true" for r in rows)
    print(f"{len(rows)} runs written to {args.output}; {failed} not converged", file=sys.stderr)
    return 0


def _cmd_compare(args) -> int:
    table = load_reference_tables(args.reference)[args.table]
    results = compare(read_csv(args.csv), table, include_fine=args.long)
    for res in results:
        print(res.line())
    n_fail = sum(r.status == "fail" for r in results)
    n_pass = sum(r.status == "pass" for r in results)
    n_skip = sum(r.status == "incomparable" for r in results)
    print(f"{args.table}: {n_pass} passed, {n_fail} failed, {n_skip} incomparable")
    return 1 if n_fail else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None:
        np.random.seed(args.seed)
    with warnings.catch_warnings():
        if args.verbose == 0:
            warnings.simplefilter("ignore", UserWarning)
        return {"run": _cmd_run, "sweep": _cmd_sweep, "compare": _cmd_compare}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
