"""Command-line front end.

Every subcommand writes CSV tables and a ``manifest.csv`` into its run
directory ``<out>/<name>``. Exit status: 0 when all checks pass, 1 when a
check fails, 2 on configuration or domain errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import presets as P
from .config import HELP, Config, load_config, with_overrides
from .errors import ConfigurationError, ConsistencyError, DomainError
from .evolution import EvolutionState, StepControls, continue_past_blowup, run_until_blowup
from .grid import build_grid, read_field_csv
from .profiles import BACKWARD, FORWARD, STEADY, ProfileFamily, bracket_c_sharp, map_alpha_to_C, shoot
from .similarity import LOG_LOG, PURE_LOG, classify_rate, fit_final_profile
from .sturm import PASS, count_blowup_events_vs_bound, intersections_with, zero_number_monotonicity_harness

logger = logging.getLogger("blowuplab")

DEFAULT_OUT = "blowuplab-out"


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


class RunDir:
    """Single writer for one run directory; tracks every emitted file."""

    def __init__(self, root: Path, name: str, gnuplot: bool = False):
        self.path = root / name
        self.path.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.gnuplot = gnuplot
        self._drop_previous()

    def _drop_previous(self):
        # files of an earlier run in the same directory would escape the new manifest
        old = self.path / "manifest.csv"
        if not old.is_file():
            return
        with old.open(newline="") as fh:
            for row in csv.reader(fh):
                if len(row) >= 2 and row[0] == "file" and "/" not in row[1] and row[1] not in ("", "..", "."):
                    (self.path / row[1]).unlink(missing_ok=True)

    def table(self, fname, header, rows):
        p = self.path / fname
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        self.files.append(fname)
        if self.gnuplot and len(header) >= 2:
            gp = fname[:-4] + ".gp"
            (self.path / gp).write_text(
                "set datafile separator ','\n"
                f"set xlabel '{header[0]}'\nset ylabel '{header[1]}'\n"
                f"plot '{fname}' using 1:2 skip 1 with linespoints title '{fname[:-4]}'\n")
            self.files.append(gp)

    def manifest(self, name, digest, started, checks):
        fname = "manifest.csv"
        files = sorted(set(self.files) | {fname})
        with (self.path / fname).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "name", "status", "value"])
            w.writerow(["run", name, "", ""])
            w.writerow(["config_hash", digest, "", ""])
            w.writerow(["started", started, "", ""])
            w.writerow(["finished", _now(), "", ""])
            for f in files:
                w.writerow(["file", f, "", ""])
            for c in checks:
                w.writerow(["check", c.name, "pass" if c.passed else "fail", _fmt(c.value)])


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# subcommands; each returns a PresetResult-like object with checks and tables


def _controls(cfg: Config, **kw):
    return StepControls(sigma=cfg.sigma, dt_max=cfg.dt_max, u_stop=cfg.u_stop, horizon=cfg.horizon, theta=cfg.theta,
                        disable_diffusion=cfg.disable_diffusion, disable_reaction=cfg.disable_reaction, **kw)


def _grid(cfg: Config):
    return build_grid(cfg.dimension, cfg.radius, cfg.nodes, cfg.grading_ratio)


def cmd_simulate(cfg, args):
    out = P.PresetResult("simulate", 0)
    g = _grid(cfg)
    u0 = P.initial_field(cfg, g)
    state, est = run_until_blowup(EvolutionState.initial(u0), _controls(cfg))
    t, m, dt = state.history.arrays()
    out.tables["history.csv"] = (["t", "maxu", "dt"], list(zip(t, m, dt)))
    out.tables["snapshots.csv"] = (["t", "r", "value"],
                                   [(s.t, r, v) for s in state.snapshots for r, v in zip(g.nodes, s.values)])
    out.tables["blowup.csv"] = (["T", "t_lo", "t_hi", "residual", "status", "flags"],
                                [(est.T, est.window[0], est.window[1], est.residual, est.status,
                                  ";".join(state.flags))])
    if "overflow" in state.flags:
        out.check("overflow carries a finite blow-up time", est.finite, est.T, "finite")
    if est.finite:
        rep = classify_rate(t, m, est.T, efolds=3.0)
        out.tables["rate.csv"] = (["classification", "band_lo", "band_hi", "t_lo", "t_hi", "samples"],
                                  [(rep.classification, *rep.band, *rep.window, rep.samples)])
    return out


def cmd_continue(cfg, args):
    out = P.PresetResult("continue", 0)
    g = _grid(cfg)
    u0 = P.initial_field(cfg, g)
    times = np.linspace(0.0, cfg.horizon, args.outputs + 1)[1:]
    res = continue_past_blowup(u0, cfg.truncation_levels, cfg.horizon, _controls(cfg), output_times=times,
                               order_tol=math.inf)
    out.check("levels ordered", res.max_order_violation <= P.ORDER_TOL, res.max_order_violation, "<= 1e-8")
    rows = []
    for j, t in enumerate(res.times):
        for i, r in enumerate(g.nodes):
            rows.append((t, r, res.limit[j, i], int(res.singular[j, i])))
    out.tables["limit.csv"] = (["t", "r", "value", "singular"], rows)
    lm = res.level_maxu()
    out.tables["level_maxu.csv"] = (["t", *[f"n{k}" for k in range(len(res.levels))]],
                                    [(t, *lm[:, j]) for j, t in enumerate(res.times)])
    out.tables["levels.csv"] = (["k", "level"], list(enumerate(res.levels)))
    ev = res.blowup_events()
    out.tables["events.csv"] = (["t_start", "t_end"], ev)
    if g.dimension >= 3:
        b = count_blowup_events_vs_bound(res, u0)
        out.check("blow-up count bound", b.status == PASS, b.events, f"<= {b.bound:g}")
        out.tables["bound.csv"] = (["events", "M0", "bound", "status"], [(b.events, b.M0, b.bound, b.status)])
    return out


FAMILIES = {"backward": BACKWARD, "forward": FORWARD, "steady": STEADY}


def cmd_shoot(cfg, args):
    out = P.PresetResult("shoot", 0)
    sol = shoot(ProfileFamily(FAMILIES[args.family], cfg.dimension), args.center, args.rho_max, args.tol)
    out.tables["profile.csv"] = (["rho", "value", "derivative"], list(zip(sol.rho, sol.values, sol.derivatives)))
    out.tables["summary.csv"] = (["family", "center", "outcome", "tail_constant", "tail_residual", "rho_end"],
                                 [(args.family, sol.center_value, sol.outcome,
                                   math.nan if sol.tail_constant is None else sol.tail_constant,
                                   sol.tail_residual, sol.rho_end)])
    return out


def cmd_map_alpha(cfg, args):
    out = P.PresetResult("map-alpha", 0)
    lo, hi, n = args.range
    alphas = np.linspace(float(lo), float(hi), int(n))
    rows = map_alpha_to_C(alphas, cfg.dimension, args.rho_max)
    out.tables["alpha_map.csv"] = (["alpha", "C_alpha", "residual", "outcome"],
                                   [(r.alpha, math.nan if r.C_alpha is None else r.C_alpha, r.residual,
                                     "trivial" if r.trivial else r.outcome) for r in rows])
    return out


def cmd_bracket(cfg, args):
    out = P.PresetResult("bracket-csharp", 0)
    b = bracket_c_sharp(cfg.dimension, tol=args.tol, rho_max=args.rho_max)
    out.check("c_lo above log(2(N-2))", b.above_lower_bound and not b.flags, b.c_lo, f"> {b.lower_bound:.6g}")
    out.tables["bracket.csv"] = (["c_lo", "c_hi", "c_max", "beta_at_max", "rho_max", "lower_bound", "flags"],
                                 [(b.c_lo, b.c_hi, b.c_max, b.beta_at_max, b.rho_max, b.lower_bound,
                                   ";".join(b.flags))])
    return out


def _read_history(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"history file not found: {p}")
    with p.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        t = np.array([float(r["t"]) for r in rows])
        m = np.array([float(r["maxu"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"{p}: expected columns t,maxu ({exc})") from None
    return t, m


def cmd_classify(cfg, args):
    from .evolution import estimate_blowup_time

    out = P.PresetResult("classify", 0)
    t, m = _read_history(args.history)
    T = args.T
    if T is None:
        est = estimate_blowup_time(t, m)
        if not est.finite:
            raise DomainError("could not estimate a blow-up time from the history")
        T = est.T
    rep = classify_rate(t, m, T, efolds=args.efolds, band_tol=args.band_tol)
    out.tables["rate.csv"] = (["classification", "band_lo", "band_hi", "t_lo", "t_hi", "samples", "T"],
                              [(rep.classification, *rep.band, *rep.window, rep.samples, T)])
    return out


def cmd_profile_fit(cfg, args):
    out = P.PresetResult("profile-fit", 0)
    f = read_field_csv(args.field, cfg.dimension)
    fits = [fit_final_profile(f, m, args.r_min, args.r_max, source=str(args.field)) for m in (PURE_LOG, LOG_LOG)]
    out.tables["fits.csv"] = (["model", "constant", "r_lo", "r_hi", "residual", "points"],
                              [(p.model, p.constant, *p.fit_window, p.residual, p.points) for p in fits])
    return out


def cmd_zeros(cfg, args):
    out = P.PresetResult("zeros", 0)
    f = read_field_csv(args.field, cfg.dimension)
    kw = {}
    if args.reference == "omega":
        kw["C"] = args.C
    if args.reference == "psi_a":
        kw["a"] = args.a
    zc = intersections_with(f, args.reference, tuple(args.window) if args.window else None, **kw)
    out.tables["zeros.csv"] = (["reference", "count", "degenerate", "crossings"],
                               [(args.reference, zc.count, int(zc.degenerate),
                                 ";".join(f"{i}-{j}" for i, j in zc.crossings))])
    return out


def cmd_harness(cfg, args):
    out = P.PresetResult("harness-sturm", 0)
    rep = zero_number_monotonicity_harness(cfg.seed, cfg.trials, nodes=cfg.nodes, q_bound=cfg.q_bound,
                                           dimension=cfg.dimension)
    out.check("zero-number violations", rep.passed, len(rep.violations), "0")
    out.tables["harness.csv"] = (["trial", "initial_count", "final_count"],
                                 [(i, a, b) for i, (a, b) in enumerate(zip(rep.initial_counts, rep.final_counts))])
    out.tables["violations.csv"] = (["trial", "output", "before", "after"], rep.violations)
    return out


def cmd_preset(cfg, args):
    return P.run_preset(args.name, cfg)


def _help_epilog():
    lines = ["config keys (key = value, one per line; defaults in brackets):"]
    d = Config()
    for k, text in HELP.items():
        v = getattr(d, k)
        if isinstance(v, tuple):
            v = ",".join(f"e^{math.log(x):g}" for x in v)
        lines.append(f"  {k:<18} {text} [{v}]")
    lines.append("")
    lines.append("presets: " + ", ".join(P.PRESETS))
    lines.append(f"output directory: --out, else $BLOWUPLAB_OUT, else ./{DEFAULT_OUT}")
    return "\n".join(lines)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the harness seed")
    common.add_argument("--emit-gnuplot", action="store_true", help="write a .gp script per table")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="blowuplab", description="Blow-up lab for u_t = Δu + e^u on a ball.",
                                 epilog=_help_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="run into blow-up").set_defaults(func=cmd_simulate)

    p = sub.add_parser("continue", parents=[common], help="continue past blow-up by truncation")
    p.add_argument("--outputs", type=int, default=20, help="number of output times")
    p.set_defaults(func=cmd_continue)

    p = sub.add_parser("shoot", parents=[common], help="shoot one profile")
    p.add_argument("--family", choices=sorted(FAMILIES), required=True)
    p.add_argument("--center", type=float, required=True)
    p.add_argument("--rho-max", type=float, default=20.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_shoot)

    p = sub.add_parser("map-alpha", parents=[common], help="tail constants of backward shots")
    p.add_argument("--range", nargs=3, metavar=("LO", "HI", "COUNT"), default=("1", "20", "20"))
    p.add_argument("--rho-max", type=float, default=10.0)
    p.set_defaults(func=cmd_map_alpha)

    p = sub.add_parser("bracket-csharp", parents=[common], help="bracket the forward tail-constant threshold")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--rho-max", type=float, default=20.0)
    p.set_defaults(func=cmd_bracket)

    p = sub.add_parser("classify", parents=[common], help="classify a t,maxu history")
    p.add_argument("--history", required=True)
    p.add_argument("--T", type=float)
    p.add_argument("--efolds", type=float, default=3.0)
    p.add_argument("--band-tol", type=float, default=1.0)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("profile-fit", parents=[common], help="fit both final-profile models to an r,value field")
    p.add_argument("--field", required=True)
    p.add_argument("--r-min", type=float)
    p.add_argument("--r-max", type=float)
    p.set_defaults(func=cmd_profile_fit)

    p = sub.add_parser("zeros", parents=[common], help="intersections of an r,value field with a reference")
    p.add_argument("--field", required=True)
    p.add_argument("--reference", choices=["phi_star", "omega", "psi_a"], default="phi_star")
    p.add_argument("--C", type=float, default=0.0)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=cmd_zeros)

    sub.add_parser("harness-sturm", parents=[common], help="zero-number monotonicity harness").set_defaults(
        func=cmd_harness)

    p = sub.add_parser("preset", parents=[common], help="run a preset experiment")
    p.add_argument("name", choices=sorted(P.PRESETS))
    p.set_defaults(func=cmd_preset)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    started = _now()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = with_overrides(cfg, seed=args.seed)
        result = args.func(cfg, args)
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConsistencyError as exc:
        print(f"consistency check failed: {exc}", file=sys.stderr)
        return 1

    name = args.name if args.command == "preset" else args.command
    root = Path(args.out or os.environ.get("BLOWUPLAB_OUT") or DEFAULT_OUT)
    rd = RunDir(root, name, args.emit_gnuplot)
    for fname, (header, rows) in result.tables.items():
        rd.table(fname, header, rows)
    extra = " ".join(f"{k}={v}" for k, v in sorted(vars(args).items()) if k not in ("func", "out", "verbose"))
    rd.manifest(name, cfg.digest(extra), started, result.checks)
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  value={_fmt(c.value)}  ({c.tolerance})")
    print(f"wrote {len(rd.files) + 1} files to {rd.path}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
