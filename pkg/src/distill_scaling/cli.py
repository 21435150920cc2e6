"""Command-line entry point.

Every subcommand prints CSV (tables) or JSON (structured results) to stdout,
or writes to ``--out``. Exit status: 0 on success, 1 on a domain or data
error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import accounting, capacity_gap, fitting, io, kernels, laws, numkit, optimal

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


# -- argument helpers -------------------------------------------------------

def _float_list(text: str) -> list[float]:
    """Comma list of numbers, or ``start:stop:count`` for a log-spaced range."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return [float(x) for x in np.geomspace(float(a), float(b), int(n))]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text!r}")
    return v


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="random seed (default 0)")
    p.add_argument("--coeffs", default=d,
                   help="'reference' or a JSON coefficient file (default reference)")
    p.add_argument("--profile", default=d,
                   help="JSON file with aspect profile fields (rho_model, rho_ffn, ...)")
    p.add_argument("--config", default=d,
                   help=f"JSON config file (default: ${io.CONFIG_ENV} if set)")
    p.add_argument("--out", default=d, help="output path (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default=d,
                   help="table format (default csv)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    parser = argparse.ArgumentParser(
        prog="distill-scaling",
        description="Scaling laws for supervised training and distillation.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def group(name, help_):
        p = sub.add_parser(name, help=help_)
        s = p.add_subparsers(dest="action", metavar="ACTION")
        s.required = True
        return s

    # accounting
    s = group("accounting", "parameter and FLOP accounting")
    p = s.add_parser("table", parents=[common], help="accounting table for model sizes")
    p.add_argument("--sizes", default="reference",
                   help="'reference' or a list of non-embedding parameter counts")
    p.add_argument("--rho-model", type=_positive_float, default=None,
                   help="override the d_model / n_layers ratio")

    # law
    s = group("law", "evaluate the scaling laws")
    p = s.add_parser("eval", parents=[common], help="evaluate a law on a grid")
    p.add_argument("--law", choices=["supervised", "distill"], required=True)
    p.add_argument("--n", type=_float_list, required=True, help="model sizes (student sizes)")
    p.add_argument("--d", type=_float_list, required=True,
                   help="token counts; 'inf' gives the infinite-data limit")
    p.add_argument("--lt", type=_float_list, default=None, help="teacher losses (distill)")
    p = s.add_parser("best-teacher", parents=[common],
                     help="teacher loss giving the best student")
    p.add_argument("--n-s", type=_float_list, required=True)
    p.add_argument("--d-s", type=_float_list, required=True)

    # fit
    s = group("fit", "fit law coefficients to runs")
    for kind in ("supervised", "distill"):
        p = s.add_parser(kind, parents=[common], help=f"fit the {kind} law")
        p.add_argument("--runs", required=True, help="CSV or JSON-lines run table")
        p.add_argument("--filter-loss", type=float, default=None,
                       help="drop runs with observed loss below this")
        p.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples")
        p.add_argument("--level", type=float, default=0.9, help="interval level")
        p.add_argument("--max-starts", type=int, default=256)
        p.add_argument("--fix", action="append", default=[], metavar="NAME=VALUE",
                       help="hold a coefficient fixed (repeatable)")

    # plan
    s = group("plan", "compute-optimal planning")
    p = s.add_parser("optimal", parents=[common], help="optimal plan for one student and budget")
    p.add_argument("--n-s", type=_positive_float, required=True)
    p.add_argument("--compute", type=_positive_float, required=True)
    p.add_argument("--scenario", choices=list(optimal.SCENARIOS), default="best-case")
    p = s.add_parser("sweep", parents=[common], help="plans over sizes, budgets and scenarios")
    p.add_argument("--n-s", type=_float_list, required=True)
    p.add_argument("--compute", type=_float_list, required=True)
    p.add_argument("--scenarios", default="best-case",
                   help="comma list of scenarios, or 'all'")
    p = s.add_parser("teacher-select", parents=[common], help="best existing teacher")
    p.add_argument("--n-s", type=_positive_float, required=True)
    p.add_argument("--budget", type=_positive_float, required=True)
    p.add_argument("--teachers", required=True, help="CSV with columns n_t, l_t")
    p.add_argument("--budget-kind", choices=["flops", "tokens"], default="flops")
    p.add_argument("--scenario", choices=list(optimal.SCENARIOS), default="teacher-inference")
    p = s.add_parser("break-even", parents=[common],
                     help="compute where supervised training catches up")
    p.add_argument("--n-s", type=_float_list, required=True)
    p.add_argument("--scenario", choices=list(optimal.SCENARIOS), default="best-case")

    # capacity gap
    s = group("capacity-gap", "kernel-regression capacity gap and mapping labels")
    p = s.add_parser("kernel", parents=[common], help="student error against teacher size")
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--T", type=_positive_float, default=5.0)
    p.add_argument("--D", type=_positive_float, default=4.5)
    p.add_argument("--n", type=int, action="append", required=True, help="student size")
    p.add_argument("--m-step", type=int, default=1)
    p = s.add_parser("label", parents=[common], help="label of a mapping-task vector")
    p.add_argument("--vector", required=True, help="digits or a comma list")
    p.add_argument("--classes", type=int, default=8)

    # kernels
    s = group("kernels", "distillation loss kernels")
    p = s.add_parser("eval", parents=[common], help="evaluate a loss on logits")
    p.add_argument("--op", choices=["kd", "ntp", "zloss", "reverse-kl", "student"], required=True)
    p.add_argument("--logits", required=True,
                   help="JSON with 'teacher', 'student' and optional 'targets'")
    p.add_argument("--tau", type=_positive_float, default=1.0)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--lam-z", type=float, default=0.0)

    # calibration
    s = group("calibration", "calibration metrics")
    p = s.add_parser("ece", parents=[common], help="expected calibration error")
    p.add_argument("--samples", required=True,
                   help="CSV with confidence,correct or conf_a,conf_b columns")
    p.add_argument("--bins", type=int, default=21)
    return parser


# -- shared state -----------------------------------------------------------

class _Ctx:
    def __init__(self, args):
        self.cfg = io.load_config(args.config)
        self.seed = self.cfg.seed if args.seed is None else args.seed
        sc, dc = io.load_coeffs(args.coeffs or self.cfg.coeffs)
        self.sc, self.dc = sc, dc
        if args.profile:
            prof = json.loads(Path(args.profile).read_text(encoding="utf-8"))
            self.profile = accounting.AspectProfile(**prof)
        else:
            self.profile = self.cfg.profile
        self.bounds = self.cfg.bounds
        self.out = args.out or self.cfg.out
        self.format = args.format or "csv"

    def table(self, rows, columns):
        text = io.emit_grid(rows, columns, self.out, self.format)
        if self.out is None:
            sys.stdout.write(text)

    def json(self, obj):
        text = io.write_json(obj, self.out)
        if self.out is None:
            sys.stdout.write(text)


# -- command handlers -------------------------------------------------------

def _accounting_table(args, ctx):
    profile = ctx.profile
    if args.rho_model is not None:
        profile = accounting.AspectProfile(args.rho_model, profile.rho_ffn, profile.n_ffn,
                                           profile.g_size, profile.n_ctx, profile.n_vocab)
    if args.sizes == "reference":
        layers = [(r["name"], r["n_layers"]) for r in accounting.load_model_sizes()]
    else:
        layers = [(repr(N), accounting.arch_from_N(N, profile)[0]) for N in _float_list(args.sizes)]
    rows = [accounting.accounting_row(accounting.fixed_aspect_arch(L, profile), profile, name)
            for name, L in layers]
    ctx.table(rows, list(rows[0]) if rows else ["name"])


def _law_eval(args, ctx):
    rows = []
    if args.law == "supervised":
        for N in args.n:
            for D in args.d:
                L = laws.supervised_limit(N, ctx.sc) if math.isinf(D) else laws.supervised_loss(N, D, ctx.sc)
                rows.append({"N": N, "D": D, "L": float(L)})
        ctx.table(rows, ["N", "D", "L"])
        return
    if not args.lt:
        raise ValueError("--lt is required for the distillation law")
    for N in args.n:
        for D in args.d:
            for LT in args.lt:
                if math.isinf(D):
                    L = laws.distillation_limit(N, LT, ctx.dc, ctx.sc)
                else:
                    L = laws.distillation_loss(N, D, LT, ctx.dc, ctx.sc)
                rows.append({"N_S": N, "D_S": D, "L_T": LT, "L_S": float(L)})
    ctx.table(rows, ["N_S", "D_S", "L_T", "L_S"])


def _law_best_teacher(args, ctx):
    rows = []
    for N in args.n_s:
        for D in args.d_s:
            bt = laws.best_teacher_loss(N, D, ctx.dc, ctx.sc)
            rows.append({"N_S": N, "D_S": D, "L_T": bt.L_T, "L_S": bt.L_S,
                         "at_boundary": bt.at_boundary})
    ctx.table(rows, ["N_S", "D_S", "L_T", "L_S", "at_boundary"])


def _parse_fixed(items):
    fixed = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--fix expects NAME=VALUE, got {item!r}")
        fixed[name.strip()] = float(value)
    return fixed or None


def _fit(args, ctx):
    kind = "supervised" if args.action == "supervised" else "distill"
    table = io.load_runs(args.runs, kind)
    cfg = fitting.FitConfig(filter_loss=args.filter_loss, bootstrap=args.bootstrap,
                            level=args.level, seed=ctx.seed, max_starts=args.max_starts,
                            fixed=_parse_fixed(args.fix))
    if kind == "supervised":
        res = fitting.fit_supervised(table.records, cfg)
    else:
        res = fitting.fit_distillation(table.records, ctx.sc, cfg)
    out = res.to_dict()
    out["law"] = kind
    out["runs"] = table.source
    out["seed"] = ctx.seed
    ctx.json(out)


def _plan_optimal(args, ctx):
    plan = optimal.distill_optimal(args.n_s, args.compute, args.scenario, ctx.dc, ctx.sc,
                                   ctx.bounds, ctx.profile)
    ctx.json(plan.to_dict())


_PLAN_COLUMNS = ["scenario", "N_S", "C", "D_S", "N_T", "D_T", "L_T", "L_S", "flops",
                 "converged", "at_boundary", "error"]


def _plan_sweep(args, ctx):
    scen = list(optimal.SCENARIOS) if args.scenarios == "all" else args.scenarios.split(",")
    for s in scen:
        optimal.scenario_deltas(s)
    rows = optimal.sweep(args.n_s, args.compute, scen, ctx.dc, ctx.sc, ctx.bounds, ctx.profile)
    for r in rows:
        if "at_bound" in r:
            r["at_boundary"] = any(r["at_bound"].values())
    ctx.table(rows, _PLAN_COLUMNS)


def _plan_teacher_select(args, ctx):
    import csv
    teachers = []
    with open(args.teachers, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for r in reader:
            try:
                teachers.append({"N_T": float(r["n_t"]), "L_T": float(r["l_t"])})
            except (KeyError, TypeError, ValueError):
                raise ValueError(f"{args.teachers} line {reader.line_num}: "
                                 "need numeric n_t and l_t columns") from None
    best, _, rows = optimal.teacher_select(args.n_s, args.budget, teachers, args.scenario,
                                           args.budget_kind, ctx.dc, ctx.sc, ctx.profile)
    for i, r in enumerate(rows):
        r["best"] = i == best
    ctx.table(rows, ["N_T", "L_T", "D_S", "L_S", "best"])


def _plan_break_even(args, ctx):
    rows = []
    for N in args.n_s:
        c = optimal.break_even(N, args.scenario, ctx.dc, ctx.sc, ctx.bounds, ctx.profile)
        rows.append({"N_S": N, "scenario": args.scenario, "C_break_even": c})
    ctx.table(rows, ["N_S", "scenario", "C_break_even"])


def _capacity_kernel(args, ctx):
    setup = capacity_gap.random_setup(args.size, args.T, args.D, ctx.seed)
    ms = range(1, args.size + 1, args.m_step)
    rows = []
    for n in args.n:
        rows.extend(capacity_gap.error_curve(setup, n, ms))
    ctx.table(rows, ["n", "m", "student_error", "teacher_error"])


def _capacity_label(args, ctx):
    v = args.vector
    vec = [int(x) for x in v.split(",")] if "," in v else v
    label = capacity_gap.mapping_label(vec, args.classes)
    ctx.json({"vector": args.vector, "label": label})


def _kernels_eval(args, ctx):
    data = json.loads(Path(args.logits).read_text(encoding="utf-8"))
    zt = np.asarray(data.get("teacher", []), dtype=float)
    zs = np.asarray(data.get("student", []), dtype=float)
    x = data.get("targets")
    if args.op == "kd":
        val = kernels.kd_loss(zt, zs, args.tau)
    elif args.op == "reverse-kl":
        val = kernels.reverse_kl_loss(zt, zs, args.tau)
    elif args.op == "zloss":
        val = kernels.z_loss(zs)
    elif args.op == "ntp":
        if x is None:
            raise ValueError("ntp needs 'targets' in the logits file")
        val = kernels.ntp_loss(np.asarray(x), zs)
    else:
        if x is None:
            raise ValueError("student loss needs 'targets' in the logits file")
        val = kernels.student_loss(np.asarray(x), zt, zs,
                                   kernels.LossParams(args.tau, args.lam, args.lam_z))
    ctx.json({"op": args.op, "tau": args.tau, "value": val})


def _calibration_ece(args, ctx):
    import csv
    with open(args.samples, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        rows = list(reader)
    if {"confidence", "correct"} <= set(cols):
        a = [float(r["confidence"]) for r in rows]
        b = [float(r["correct"]) for r in rows]
        value, bins = kernels.ece(a, b, args.bins)
    elif {"conf_a", "conf_b"} <= set(cols):
        a = [float(r["conf_a"]) for r in rows]
        b = [float(r["conf_b"]) for r in rows]
        value, bins = kernels.ece_dist(a, b, args.bins)
    else:
        raise ValueError("samples need confidence,correct or conf_a,conf_b columns")
    # the scalar goes to stderr-free stdout first; per-bin rows follow or go to --out
    sys.stdout.write(f"ece,{io.format_value(value)}\n")
    text = io.emit_grid(bins, list(bins[0]), ctx.out, "csv")
    if ctx.out is None:
        sys.stdout.write(text)


HANDLERS = {
    ("accounting", "table"): _accounting_table,
    ("law", "eval"): _law_eval,
    ("law", "best-teacher"): _law_best_teacher,
    ("fit", "supervised"): _fit,
    ("fit", "distill"): _fit,
    ("plan", "optimal"): _plan_optimal,
    ("plan", "sweep"): _plan_sweep,
    ("plan", "teacher-select"): _plan_teacher_select,
    ("plan", "break-even"): _plan_break_even,
    ("capacity-gap", "kernel"): _capacity_kernel,
    ("capacity-gap", "label"): _capacity_label,
    ("kernels", "eval"): _kernels_eval,
    ("calibration", "ece"): _calibration_ece,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        ctx = _Ctx(args)
        HANDLERS[(args.command, args.action)](args, ctx)
    except (ValueError, OSError, numkit.ConvergenceError, json.JSONDecodeError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())
