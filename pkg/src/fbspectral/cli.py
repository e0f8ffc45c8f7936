"""Command line entry point.

Exit codes: 0 success, 1 a check or verdict failed, 2 usage or config error,
3 infeasible time window in ``inflate`` (a partial report is still written).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .estimates import duhamel_scaling, smoothing_scaling
from .illposedness import CounterexampleConfig, inflation_experiment
from .littlewood_paley import (BesovParams, CoverageWarning, block_norms, fb_norm, partition_for_grid,
                               product_law_suite)
from .mild_solver import SolverConfig, picard_solve
from .semigroup import apply_semigroup, helmholtz_project, multiplier_matrices
from .spectral_core import (ConfigurationError, PhysicalParams, SpectralField, UsageError, load_field,
                            make_grid, random_field, save_field)

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2, 3
OUTPUT_ENV = "FBSPECTRAL_OUTPUT_DIR"


def _real(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "+inf"):
        return math.inf
    return float(t)


def _floats(text: str) -> tuple:
    return tuple(_real(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (parser, default)
SCHEMA = {
    "physics": {"nu": (_real, "1.0"), "omega": (_real, "1.0"), "n_big": (_real, "1.0")},
    "grid": {"n": (int, "32"), "box_scale": (_real, "1.0")},
    "run": {"seed": (int, "0"), "workers": (int, "1")},
    "besov": {"s": (_real, "0.5"), "p": (_real, "2"), "r": (_real, "2")},
    "solver": {"t_end": (_real, "1.0"), "n_time": (int, "16"), "alpha": (_real, "0.5"),
               "tol": (_real, "1e-10"), "max_iters": (int, "50"), "nonlinear": (_bool, "true")},
    "data": {"amplitude": (_real, "1e-3"), "band": (_floats, "1 4")},
    "inflate": {"m_values": (_ints, "3 4 5 6 7 8"), "r": (_real, "4"), "quad_order_eta": (int, "8"),
                "quad_points_xi": (int, "6"), "n_times": (int, "16"), "t_window": (_floats, "")},
    "smoothing": {"nus": (_floats, "1 0.1 0.01"), "alpha": (_real, "0.5"), "t_end": (_real, "1000"),
                  "n_samples": (int, "300"), "band": (_floats, "2 4"), "tolerance": (_real, "0.1")},
}


class Config:
    """Typed view on an INI file with defaults; unknown sections or keys are errors."""

    def __init__(self, path: str | None = None, sections=()):
        self.parser = configparser.ConfigParser(interpolation=None)
        self.path = path
        self.sections = tuple(sections)
        if path is not None:
            try:
                with open(path) as fh:
                    self.parser.read_file(fh)
            except OSError as exc:
                raise UsageError(f"cannot read config {path}: {exc}") from exc
            except configparser.Error as exc:
                raise UsageError(f"{path}: {exc}") from exc
            for sec in self.parser.sections():
                if sec not in SCHEMA:
                    raise UsageError(f"{path}: unknown section [{sec}]")
                for key in self.parser[sec]:
                    if key not in SCHEMA[sec]:
                        raise UsageError(f"{path}: unknown key '{key}' in [{sec}]")

    def get(self, section: str, key: str):
        parse, default = SCHEMA[section][key]
        raw = self.parser.get(section, key, fallback=default)
        try:
            return parse(raw)
        except ValueError as exc:
            raise UsageError(f"{self.path or '<defaults>'}: [{section}] {key} = {raw!r}: {exc}") from exc

    def resolved(self) -> list[tuple[str, str]]:
        out = []
        for sec in self.sections:
            for key in SCHEMA[sec]:
                raw = self.parser.get(sec, key, fallback=SCHEMA[sec][key][1])
                out.append((f"{sec}.{key}", raw.strip()))
        return out

    def params(self) -> PhysicalParams:
        return PhysicalParams.from_n(self.get("physics", "nu"), self.get("physics", "omega"),
                                     self.get("physics", "n_big"))

    def besov(self) -> BesovParams:
        return BesovParams(self.get("besov", "s"), self.get("besov", "p"), self.get("besov", "r"))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[tuple[str, str]], columns: list[str], rows) -> Path:
    """CSV with ``# key = value`` comment lines carrying the resolved settings."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for key, value in header:
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _output_dir(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ENV, "."))


# subcommands

def cmd_norms(args) -> int:
    field = load_field(args.field)
    besov = BesovParams(args.s, args.p, args.r)
    partition = partition_for_grid(field.grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoverageWarning)
        blocks = block_norms(field, besov.p, partition)
        total = fb_norm(field, besov, partition)
    header = [("subcommand", "norms"), ("field", str(args.field)), ("s", _fmt(besov.s)),
              ("p", _fmt(besov.p)), ("r", _fmt(besov.r)), ("n", str(field.grid.n_per_axis)),
              ("box_scale", _fmt(field.grid.box_scale)), ("fb_norm", _fmt(total))]
    rows = [(j, b, 2.0 ** (besov.s * j) * b) for j, b in zip(partition.indices, blocks)]
    path = write_csv(_output_dir(args) / "norms.csv", header, ["block", "lp_norm", "weighted"], rows)
    print(f"fb_norm(s={besov.s:g}, p={besov.p:g}, r={besov.r:g}) = {total:.10g}  [{path}]")
    return EXIT_OK


def cmd_evolve(args) -> int:
    field = load_field(args.v0)
    cfg = Config(args.config, ("physics",))
    params = cfg.params()
    if args.t < 0:
        raise UsageError("t must be nonnegative")
    out = apply_semigroup(field, args.t, params)
    target = Path(args.output) if args.output else _output_dir(args) / "evolved.fbsf"
    target.parent.mkdir(parents=True, exist_ok=True)
    save_field(out, target)
    print(f"T({args.t:g}) applied; max |vhat| {field.max_abs():.6g} -> {out.max_abs():.6g}  [{target}]")
    return EXIT_OK


def _picard_data(cfg: Config, grid, params, besov) -> SpectralField:
    seed = cfg.get("run", "seed")
    amp = cfg.get("data", "amplitude")
    band = cfg.get("data", "band")
    if len(band) != 2:
        raise UsageError("[data] band needs two numbers")
    if amp == 0:
        return SpectralField.zeros(grid)
    u = helmholtz_project(random_field(grid, np.random.default_rng(seed), band=band))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoverageWarning)
        norm = fb_norm(u, besov, partition_for_grid(grid))
    return u.scale(amp * params.nu / norm)


def cmd_picard(args) -> int:
    cfg = Config(args.config, ("physics", "grid", "run", "besov", "solver", "data"))
    params = cfg.params()
    besov = cfg.besov()
    grid = make_grid(cfg.get("grid", "n"), cfg.get("grid", "box_scale"))
    solver = SolverConfig(params, besov, t_end=cfg.get("solver", "t_end"), n_time=cfg.get("solver", "n_time"),
                          alpha=cfg.get("solver", "alpha"), picard_tol=cfg.get("solver", "tol"),
                          max_iters=cfg.get("solver", "max_iters"), nonlinear=cfg.get("solver", "nonlinear"))
    v0 = _picard_data(cfg, grid, params, besov)
    _, diag = picard_solve(v0, solver)
    header = [("subcommand", "picard")] + cfg.resolved() + [
        ("converged", _fmt(diag.converged)), ("diverged", _fmt(diag.diverged)),
        ("contraction_ratio", _fmt(diag.contraction_ratio)), ("message", diag.message or "-")]
    path = write_csv(_output_dir(args) / "picard.csv", header, ["iteration", "diff_norm", "ratio", "residual"],
                     diag.rows())
    print(f"picard: {diag.iterations} iterations, converged={diag.converged}, "
          f"max ratio {diag.contraction_ratio:.3g}, residual {diag.residual:.3g}  [{path}]")
    return EXIT_OK if diag.converged else EXIT_FAILED


def cmd_inflate(args) -> int:
    cfg = Config(args.config, ("physics", "run", "inflate"))
    window = cfg.get("inflate", "t_window")
    if window and len(window) != 2:
        raise UsageError("[inflate] t_window needs two numbers")
    template = CounterexampleConfig(
        m_big=1, r=cfg.get("inflate", "r"), params=cfg.params(), t_window=tuple(window) if window else None,
        quad_order_eta=cfg.get("inflate", "quad_order_eta"), quad_points_xi=cfg.get("inflate", "quad_points_xi"),
        n_times=cfg.get("inflate", "n_times"))
    report = inflation_experiment(cfg.get("inflate", "m_values"), template, workers=cfg.get("run", "workers"))
    out = _output_dir(args)
    header = [("subcommand", "inflate")] + cfg.resolved() + [("c_e", _fmt(report.c_e))]
    checks = report.checks()
    summary_header = header + [(f"check.{k}", _fmt(v)) for k, v in checks.items()] + [
        ("verdict", "PASS" if report.verdict else "FAIL")]
    cols = ["M", "feasible", "data_norm", "floor", "t_floor", "block_floor", "k1_l1", "k2_l1", "k3_l1",
            "j133_floor", "remainder_ratio", "bracket_lo", "bracket_hi", "note"]
    rows = [(r.m_big, r.feasible, r.data_norm, r.floor, r.t_floor, r.block_floor, r.k1, r.k2, r.k3,
             r.j133_floor, r.remainder_ratio, r.bracket[0], r.bracket[1], r.note or "-") for r in report.rows]
    path = write_csv(out / "inflation.csv", summary_header, cols, rows)
    write_csv(out / "inflation_times.csv", header,
              ["M", "t", "l1_E", "lower_bound", "block_bound", "k1_l1", "k2_l1", "k3_l1", "j133_l1"],
              report.per_time)
    print(report.summary() + f"  [{path}]")
    if not all(r.feasible for r in report.rows):
        return EXIT_INFEASIBLE
    return EXIT_OK if report.verdict else EXIT_FAILED


def cmd_product_law(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    grid = make_grid(args.n, args.box_scale)
    records = product_law_suite(grid, args.trials, args.seed, alpha=args.alpha)
    header = [("subcommand", "product-law"), ("trials", str(args.trials)), ("seed", str(args.seed)),
              ("n", str(args.n)), ("box_scale", _fmt(args.box_scale)), ("alpha", _fmt(args.alpha))]
    path = write_csv(_output_dir(args) / "product_law.csv", header, ["trial", "p", "r", "lhs", "rhs", "ratio"],
                     [(r.trial, r.p, r.r, r.lhs, r.rhs, r.ratio) for r in records])
    ratios = np.array([r.ratio for r in records])
    finite = bool(np.all(np.isfinite(ratios)))
    print(f"product law: {len(records)} checks, max ratio {np.max(ratios):.4g}, "
          f"all finite={finite}  [{path}]")
    return EXIT_OK if finite else EXIT_FAILED


def cmd_smoothing(args) -> int:
    cfg = Config(args.config, ("physics", "grid", "run", "besov", "smoothing"))
    grid = make_grid(cfg.get("grid", "n"), cfg.get("grid", "box_scale"))
    band = cfg.get("smoothing", "band")
    if len(band) != 2:
        raise UsageError("[smoothing] band needs two numbers")
    kwargs = dict(seed=cfg.get("run", "seed"), alpha=cfg.get("smoothing", "alpha"),
                  nus=cfg.get("smoothing", "nus"), besov=cfg.besov(), band=band,
                  t_end=cfg.get("smoothing", "t_end"), n_samples=cfg.get("smoothing", "n_samples"),
                  omega=cfg.get("physics", "omega"), n_big=cfg.get("physics", "n_big"))
    fits = [smoothing_scaling(grid, **kwargs), duhamel_scaling(grid, **kwargs)]
    tol = cfg.get("smoothing", "tolerance")
    fitted = []
    ok = True
    for fit in fits:
        for sign in (1, -1):
            e, want = fit.exponent(sign), fit.expected(sign)
            ok &= abs(e - want) <= tol
            fitted.append((f"exponent.{fit.kind}.{'+' if sign > 0 else '-'}", f"{e!r} (expected {want!r})"))
    header = [("subcommand", "smoothing")] + cfg.resolved() + fitted
    rows = [row for fit in fits for row in fit.rows()]
    path = write_csv(_output_dir(args) / "smoothing.csv", header, ["kind", "nu", "sign", "ratio"], rows)
    for key, val in fitted:
        print(f"{key}: {val}")
    print(f"smoothing: {'PASS' if ok else 'FAIL'}  [{path}]")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_matrices(args) -> int:
    params = PhysicalParams.from_n(args.nu, args.omega, args.n_big)
    xi = np.array(args.xi, dtype=float)
    mats = multiplier_matrices(xi, params)
    np.set_printoptions(precision=6, suppress=True)
    for name, m in (("M1", mats.m1), ("M2", mats.m2), ("M3", mats.m3)):
        print(f"{name} =\n{m}")
    if bool(mats.fallback):
        print("note: |xi|' = 0, fallback M1 = I, M2 = M3 = 0")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbspectral", description=__doc__.splitlines()[0])
    parser.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or the current directory)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("norms", help="Fourier-Besov block norms of a saved field")
    p.add_argument("--field", required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--p", type=_real, default=2.0)
    p.add_argument("--r", type=_real, default=2.0)
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("evolve", help="apply the linear flow to a saved field")
    p.add_argument("--v0", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--config", help="INI file with a [physics] section")
    p.add_argument("--output", help="field file to write (default <out>/evolved.fbsf)")
    p.set_defaults(func=cmd_evolve)

    for name, func, text in (("picard", cmd_picard, "Picard iteration for small random data"),
                             ("inflate", cmd_inflate, "norm inflation experiment"),
                             ("smoothing", cmd_smoothing, "viscosity scaling of the linear estimates")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="INI file; missing keys take defaults")
        p.set_defaults(func=func)

    p = sub.add_parser("product-law", help="random checks of the Chemin-Lerner product estimate")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--box-scale", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_product_law)

    p = sub.add_parser("matrices", help="print M1, M2, M3 at one frequency")
    p.add_argument("--xi", type=float, nargs=3, required=True)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--n-big", type=float, default=1.0)
    p.set_defaults(func=cmd_matrices)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, OSError) as exc:
        print(f"fbspectral {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
