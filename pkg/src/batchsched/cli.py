"""Command-line interface.

Every command reads an INI-style config with sections [problem], [schedule],
[run] and [sweep], and writes deterministic text output.  Exit codes: 0 on
success, 2 on config or domain errors, 3 on numerical divergence.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import os
import sys

import numpy as np

from . import analysis, fsl, optimizer, schedule as sch, simulator
from .errors import BatchSchedError, DomainError, InfeasibleError, InstabilityError
from .model import SPEC_KEYS, ProblemSpec, make_spectrum
from .trajectory import Trajectory

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

SCHEDULE_KEYS = {"kind", "text", "path", "B", "D", "B1", "B2", "P", "D0", "alpha", "nu", "A", "T", "q",
                 "scale", "eta"}
RUN_KEYS = {"seed", "repeats", "eval_every", "grid_step", "order"}
SWEEP_KEYS = {"D_list", "plan_source", "evaluator", "B1", "B2", "B_min", "B_max_cap", "dim",
              "switch_frac", "T", "K", "epsilon", "window", "tail_average"}
SECTIONS = {"problem": set(SPEC_KEYS), "schedule": SCHEDULE_KEYS, "run": RUN_KEYS, "sweep": SWEEP_KEYS}


class ConfigError(DomainError):
    pass


class Config:
    def __init__(self, text: str):
        cp = configparser.ConfigParser(interpolation=None, strict=True)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        for sec in cp.sections():
            if sec not in SECTIONS:
                raise ConfigError(f"unknown section [{sec}]")
            for key in cp[sec]:
                if key not in SECTIONS[sec]:
                    raise ConfigError(f"unknown key '{key}' in [{sec}]")
        self.cp = cp

    @classmethod
    def load(cls, path: str) -> "Config":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def get(self, sec, key, default=None, cast=float):
        if self.cp.has_option(sec, key):
            raw = self.cp.get(sec, key).strip()
            try:
                return cast(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key} in [{sec}]: {raw!r}") from exc
        if default is None:
            raise ConfigError(f"missing key '{key}' in [{sec}]")
        return default

    def has(self, sec, key):
        return self.cp.has_option(sec, key)

    def spec(self) -> ProblemSpec:
        if not self.cp.has_section("problem"):
            raise ConfigError("missing [problem] section")
        return ProblemSpec.from_dict(dict(self.cp["problem"]))

    def floats(self, sec, key):
        if not self.has(sec, key):
            raise ConfigError(f"missing key '{key}' in [{sec}]")
        try:
            return [float(x) for x in self.cp.get(sec, key).replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"bad list for {key} in [{sec}]") from exc

    def schedule(self, spec: ProblemSpec):
        """Continuous schedule or DiscreteSchedule, as described by [schedule]."""
        g = lambda k, d=None: self.get("schedule", k, d)
        kind = self.get("schedule", "kind", "constant", str)
        if kind == "constant":
            return sch.constant(g("B"), g("D"))
        if kind == "two_stage":
            return sch.two_stage(g("B1"), g("B2"), g("D"), g("P"))
        if kind == "power_growth":
            return sch.power_growth(g("A"), g("T"), g("q"))
        if kind == "text":
            return sch.from_text(self.get("schedule", "text", None, str))
        if kind == "file":
            path = self.get("schedule", "path", None, str)
            try:
                with open(path, encoding="utf-8") as fh:
                    return sch.from_text(fh.read())
            except OSError as exc:
                raise ConfigError(f"cannot read schedule file {path}") from exc
        if kind == "appendix_b2_easy":
            return sch.appendix_b2_easy(g("D0"), spec, g("alpha", 1000.0), g("nu", 10.0), g("scale", 500.0))
        if kind == "appendix_b2_hard":
            return sch.appendix_b2_hard(g("D0"), spec, g("alpha", 1.0), g("nu", 10.0))
        raise ConfigError(f"unknown schedule kind '{kind}'")


def _continuous(s):
    return s.to_schedule() if isinstance(s, sch.DiscreteSchedule) else s


def _discrete(s, eta):
    return s if isinstance(s, sch.DiscreteSchedule) else sch.discretize(s, eta)


def _emit(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _t_grid(arg, T):
    if arg is None:
        arg = "256"
    if "," in arg:
        return np.array(sorted(float(x) for x in arg.split(",")))
    n = int(arg)
    if n < 1:
        raise ConfigError("--t-grid needs at least one point")
    return np.arange(1, n + 1) * (T / n)


def cmd_fsl_eval(args, cfg: Config):
    spec = cfg.spec()
    s = _continuous(cfg.schedule(spec))
    grid_step = cfg.get("run", "grid_step", 0.0) or None
    if args.predictor == "simplified":
        traj = fsl.fsl_trajectory(spec, s, _t_grid(args.t_grid, s.T))
    else:
        if args.predictor == "volterra":
            traj = fsl.volterra_solve(spec, s, grid_step)
        else:
            variant = "Lower" if args.predictor == "ode-lower" else "Upper"
            traj = fsl.moment_ode(spec, s, variant, grid_step, int(cfg.get("run", "order", 1.0)))
        if args.t_grid is not None:
            ts = _t_grid(args.t_grid, s.T)
            traj = Trajectory(ts, traj.at(ts), traj.kind)
    _emit(traj.to_csv(), args.out)


def _run_cfg(cfg, args, spec, ds, theta0=None, seed_offset=0):
    seed = args.seed if args.seed is not None else int(cfg.get("run", "seed", 0.0))
    return simulator.RunConfig(spec, ds, seed + seed_offset, int(cfg.get("run", "eval_every", 1.0)),
                               int(cfg.get("run", "repeats", 1.0)), theta0)


def _simulate(rc, threads):
    return simulator.run_sgd(rc) if rc.repeats == 1 else simulator.run_sgd_averaged(rc, threads)


def cmd_simulate(args, cfg: Config):
    spec = cfg.spec()
    if args.recipe == "catchup":
        return _catchup_recipe(args, cfg, spec)
    ds = _discrete(cfg.schedule(spec), spec.eta)
    theta0 = np.asarray(make_spectrum(spec).theta_star) if args.theta0_star else None
    traj = _simulate(_run_cfg(cfg, args, spec, ds, theta0), args.threads)
    _emit(traj.to_csv(), args.out)


def _catchup_recipe(args, cfg, spec):
    """Constant-small, constant-large, early- and late-switch runs at equal step count."""
    B1 = int(cfg.get("sweep", "B1", 1.0))
    B2 = int(cfg.get("sweep", "B2", 2.0))
    K = int(cfg.get("sweep", "K"))
    frac = cfg.get("sweep", "switch_frac", 0.7)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    early = max(1, int(round(0.1 * K)))
    late = int(round(frac * K))
    runs = {
        "constant_small": np.full(K, B1),
        "constant_large": np.full(K, B2),
        "early_switch": np.concatenate((np.full(early, B1), np.full(K - early, B2))),
        "late_switch": np.concatenate((np.full(late, B1), np.full(K - late, B2))),
    }
    lines = []
    for i, (name, b) in enumerate(runs.items()):
        ds = sch.DiscreteSchedule(b.astype(np.int64), spec.eta)
        traj = _simulate(_run_cfg(cfg, args, spec, ds, seed_offset=i), args.threads)
        _emit(traj.to_csv(), os.path.join(out_dir, f"{name}.csv"))
        se = "" if traj.stderr is None else f" stderr={traj.stderr[-1]!r}"
        lines.append(f"{name}: final_loss={traj.final!r}{se}\n")
    sys.stdout.write("".join(lines))


def cmd_optimize(args, cfg: Config):
    spec = cfg.spec()
    D = cfg.get("schedule", "D")
    B_min = cfg.get("sweep", "B_min", 1.0)
    if args.method == "closed":
        plan = optimizer.closed_form_plan(spec, D, B_min)
    else:
        cap = cfg.get("sweep", "B_max_cap", 0.0) or None
        plan = optimizer.numeric_kkt_plan(spec, D, B_min, cap)
    _emit(plan.to_text(), args.out)


def cmd_switch(args, cfg: Config):
    spec = cfg.spec()
    B1, B2 = cfg.get("sweep", "B1"), cfg.get("sweep", "B2")
    if cfg.has("sweep", "D_list"):
        fit, sols = analysis.switch_sweep(spec, cfg.floats("sweep", "D_list"), B1, B2)
        buf = io.StringIO()
        buf.write("D,P_star,D_minus_P_star,loss\n")
        for D, s in zip(cfg.floats("sweep", "D_list"), sols):
            buf.write(f"{D!r},{s.P_star!r},{D - s.P_star!r},{s.loss_at_optimum!r}\n")
        _emit(buf.getvalue(), args.out)
        sys.stdout.write(fit.summary() + "\n")
        return
    sol = optimizer.optimal_switch(spec, cfg.get("schedule", "D"), B1, B2)
    report = (f"P_star={sol.P_star!r}\nloss_at_optimum={sol.loss_at_optimum!r}\n"
              f"stationarity_residual={sol.stationarity_residual!r}\n")
    if sol.flags:
        report += "flags=" + ";".join(sol.flags) + "\n"
    _emit(report, args.out)
    if args.curve:
        _emit("P,loss\n" + "".join(f"{p!r},{l!r}\n" for p, l in sol.loss_curve.tolist()), args.curve)


def cmd_sweep(args, cfg: Config):
    spec = cfg.spec()
    D_list = cfg.floats("sweep", "D_list") if cfg.has("sweep", "D_list") else analysis.APPENDIX_B2_TOTALS
    dim = cfg.get("sweep", "dim", None, lambda x: x if x == "auto" else int(x)) \
        if cfg.has("sweep", "dim") else "auto"
    res = analysis.rate_sweep(
        spec, D_list, cfg.get("sweep", "plan_source", "AppendixB2", str),
        cfg.get("sweep", "evaluator", "MonteCarlo", str),
        repeats=int(cfg.get("run", "repeats", 100.0)),
        seed=args.seed if args.seed is not None else int(cfg.get("run", "seed", 0.0)),
        dim=dim, grid_step=cfg.get("run", "grid_step", 0.0) or None,
        B_min=cfg.get("sweep", "B_min", 1.0),
        tail_average=cfg.get("sweep", "tail_average", "false", str).lower() == "true",
        threads=args.threads)
    _emit(res.to_csv(), args.out)
    sys.stdout.write(res.fit.summary() + f"\ndim={res.dim}\n")


def cmd_catchup(args, cfg: Config):
    spec = cfg.spec()
    B1, B2 = cfg.get("sweep", "B1"), cfg.get("sweep", "B2")
    eps = cfg.get("sweep", "epsilon", 0.05)
    frac = cfg.get("sweep", "switch_frac", 0.7)
    window = tuple(cfg.floats("sweep", "window")) if cfg.has("sweep", "window") else None
    if args.mode == "theory":
        T = cfg.get("sweep", "T")
        sw, bl, t_star = analysis.theory_catchup_curves(spec, B1, B2, T, frac,
                                                        np.geomspace(1e-2, (1 - frac) * T, 600))
        gse, extra = None, ""
    else:
        # coupled runs: both schedules see the same samples in every repeat
        K = int(cfg.get("sweep", "K"))
        s_sw, s_bl, t_star = analysis.catchup_schedules(int(B1), int(B2), K, spec.eta, frac)
        sw, bl, gse = simulator.run_sgd_coupled(_run_cfg(cfg, args, spec, s_sw),
                                                _run_cfg(cfg, args, spec, s_bl), args.threads)
        comb = (math.hypot(sw.stderr[-1], bl.stderr[-1]) if sw.stderr is not None else 0.0)
        extra = (f"final_switched={sw.final!r}\nfinal_baseline={bl.final!r}\n"
                 f"combined_stderr={comb!r}\n")
    rep = analysis.measure_catchup(sw, bl, eps, t_star, window, analysis.catchup_gap(spec, B1, B2),
                                   gap_stderr=gse)
    pred = analysis.catchup_time_prediction(spec, t_star)
    _emit(rep.summary() + f"t_star={t_star!r}\ndelta_eps_predicted={pred!r}\n" + extra, args.out)
    if args.gap_csv:
        _emit(rep.gap_csv(), args.gap_csv)


# --- SVG ---------------------------------------------------------------------

def _read_xy(path):
    try:
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}") from exc
    if len(rows) < 2:
        raise ConfigError(f"{path}: empty CSV")
    head = rows[0]
    try:
        pts = [(float(r[0]), float(r[1])) for r in rows[1:] if r]
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: non-numeric data") from exc
    if not pts:
        raise ConfigError(f"{path}: empty CSV")
    return head[0], head[1], np.array(pts)


def render_svg(series, loglog=False, width=640, height=440):
    """series: list of (label, xname, yname, points).  Returns SVG text."""
    ml, mr, mt, mb = 70, 20, 20, 50
    tf = (np.log10 if loglog else (lambda v: v))
    allp = np.vstack([p for *_, p in series])
    if loglog:
        allp = allp[(allp[:, 0] > 0) & (allp[:, 1] > 0)]
        if allp.size == 0:
            raise ConfigError("log-log plot needs positive data")
    X, Y = tf(allp[:, 0]), tf(allp[:, 1])
    x0, x1 = float(X.min()), float(X.max())
    y0, y1 = float(Y.min()), float(Y.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    sx = lambda v: ml + (v - x0) / (x1 - x0) * (width - ml - mr)
    sy = lambda v: height - mb - (v - y0) / (y1 - y0) * (height - mt - mb)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>']
    xname, yname = series[0][1], series[0][2]
    pre = "log10 " if loglog else ""
    out.append(f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 12}" text-anchor="middle" '
               f'font-size="13">{pre}{xname}</text>')
    out.append(f'<text x="16" y="{(mt + height - mb) / 2:.1f}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 16 {(mt + height - mb) / 2:.1f})">{pre}{yname}</text>')
    for v, anchor in ((x0, "start"), (x1, "end")):
        out.append(f'<text x="{sx(v):.1f}" y="{height - mb + 16}" font-size="11" '
                   f'text-anchor="{anchor}">{v:.4g}</text>')
    for v in (y0, y1):
        out.append(f'<text x="{ml - 4}" y="{sy(v) + 4:.1f}" font-size="11" text-anchor="end">{v:.4g}</text>')
    for i, (label, _, _, p) in enumerate(series):
        if loglog:
            p = p[(p[:, 0] > 0) & (p[:, 1] > 0)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(tf(p[:, 0]), tf(p[:, 1])))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        note = label
        if loglog and len(p) >= 2:
            note += ": " + analysis.powerlaw_fit(p[:, 0], p[:, 1]).summary()
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 14 * i}" font-size="11" fill="{c}">{note}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plot(args, cfg=None):
    series = []
    for path in args.csv:
        xn, yn, pts = _read_xy(path)
        series.append((os.path.basename(path), xn, yn, pts))
    _emit(render_svg(series, args.loglog), args.out)


# --- entry point -------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="batchsched", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--seed", type=int, default=None, help="override [run] seed")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: cores)")
    sub = p.add_subparsers(dest="command", required=True)
    q = sub.add_parser("fsl-eval", parents=[common], help="predicted loss trajectory")
    q.add_argument("--predictor", choices=["simplified", "volterra", "ode-lower", "ode-upper"],
                   default="simplified")
    q.add_argument("--t-grid", default=None, help="point count or comma-separated times")
    q = sub.add_parser("simulate", parents=[common], help="Monte-Carlo SGD trajectory")
    q.add_argument("--theta0-star", action="store_true", help="debug: start at the target")
    q.add_argument("--recipe", choices=["catchup"], default=None,
                   help="catchup: four schedules written into the --out directory")
    q = sub.add_parser("optimize", parents=[common], help="optimal schedule plan")
    q.add_argument("--method", choices=["closed", "kkt"], default="closed")
    q = sub.add_parser("switch", parents=[common], help="optimal two-stage switch point")
    q.add_argument("--curve", default=None, help="loss-curve CSV path")
    sub.add_parser("sweep", parents=[common], help="final loss vs data budget with fit")
    q = sub.add_parser("catchup", parents=[common], help="catch-up report")
    q.add_argument("--mode", choices=["theory", "montecarlo"], default="theory")
    q.add_argument("--gap-csv", default=None)
    q = sub.add_parser("plot", help="SVG line chart of CSV files")
    q.add_argument("csv", nargs="+")
    q.add_argument("--out", default=None)
    q.add_argument("--loglog", action="store_true")
    return p


COMMANDS = {"fsl-eval": cmd_fsl_eval, "simulate": cmd_simulate, "optimize": cmd_optimize,
            "switch": cmd_switch, "sweep": cmd_sweep, "catchup": cmd_catchup, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = None if args.command == "plot" else Config.load(args.config)
        COMMANDS[args.command](args, cfg)
    except InstabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DomainError, InfeasibleError, BatchSchedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
