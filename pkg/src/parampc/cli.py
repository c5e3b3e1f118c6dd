"""Command-line front end.

Exit codes: 0 success, 2 controller failure, 3 configuration error.
Seed precedence: ``--seed`` flag, then ``PARAMPC_SEED``, then the config
file, then 42.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .empc import coverage_report
from .experiments import (REGION_METHODS, ConfigError, RunConfig, Setup, case_label,
                          long_format, run_sweep, seed_from_env, table2, theta_tag,
                          write_atomic, write_results)
from .sim import SimulationError, SimulationTrace

EXIT_OK = 0
EXIT_CONTROLLER = 2
EXIT_CONFIG = 3

log = logging.getLogger("parampc")


class _Parser(argparse.ArgumentParser):
    """Usage errors count as configuration errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


# flag dest -> config field
_OVERRIDES = {
    "case": "case", "method": "methods", "theta": "thetas", "horizon": "horizon",
    "q_scale": "q_scale", "r_scale": "r_scale", "ts": "ts", "reference": "reference",
    "duration": "duration", "x0": "x0", "variant": "variant", "order": "order",
    "state_constraints": "state_constraints", "output_dir": "output_dir", "jobs": "jobs",
    "max_regions": "max_regions", "samples": "samples",
}


def _run_flags(p):
    g = p.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--dump-config", action="store_true",
                   help="print the resolved configuration as JSON and exit")
    g.add_argument("--case", help="msd, hex or a JSON model file")
    g.add_argument("--method", type=_str_list,
                   help="comma list of exact, m1, m2, m2-inv, m2-ni")
    g.add_argument("--theta", type=_float_list, help="comma list of values in [0, 1]")
    g.add_argument("--variant", choices=("inv", "ni"), help="variant used for bare 'm2'")
    g.add_argument("--order", type=int, choices=(1, 2), help="Method II expansion order")
    g.add_argument("--horizon", "-N", type=int)
    g.add_argument("--q-scale", type=float)
    g.add_argument("--r-scale", type=float)
    g.add_argument("--ts", type=float, help="sampling time override")
    g.add_argument("--reference", help="step reference 't0:v0,t1:v1,...'")
    g.add_argument("--duration", type=float, help="simulated time in seconds")
    g.add_argument("--x0", type=_float_list, help="initial state, comma list")
    g.add_argument("--state-constraints", action="store_true", default=None,
                   help="add the state box over the horizon")
    g.add_argument("--output-dir", "-o")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", "-j", type=int)
    g.add_argument("--max-regions", type=int)
    g.add_argument("--samples", type=int, help="coverage samples")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="parampc", description=(
        "MPC for linear systems whose state matrix depends affinely on a design parameter"))
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="closed-loop runs, trace and metrics CSV")
    _run_flags(s)
    s.add_argument("--with-regions", action="store_true",
                   help="fill the metrics 'regions' column by enumerating each law")

    r = sub.add_parser("regions", help="enumerate the explicit law and report coverage")
    _run_flags(r)
    r.add_argument("--export", help="law JSON path (single method and theta only)")

    t = sub.add_parser("table2", help="error-metric table for both case studies")
    t.add_argument("--jobs", "-j", type=int, default=1)
    t.add_argument("--seed", type=int)
    t.add_argument("--no-regions", action="store_true", help="skip region counts")
    t.add_argument("--output-dir", "-o", help="also write metrics CSV here")

    d = sub.add_parser("dump", help="print the resolved config, model or reference")
    _run_flags(d)
    d.add_argument("--what", choices=("config", "model", "reference"), default="config")

    pl = sub.add_parser("plotdata", help="reshape trace CSVs into long format")
    pl.add_argument("traces", nargs="+", help="trace CSV files")
    pl.add_argument("--output", "-o", help="output CSV (default: stdout)")
    return p


def config_from_args(args) -> RunConfig:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = RunConfig.from_json(fh.read())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config} ({exc})") from None
    else:
        cfg = RunConfig()
    cfg.seed = seed_from_env(cfg.seed)
    for dest, name in _OVERRIDES.items():
        val = getattr(args, dest, None)
        if val is not None:
            setattr(cfg, name, val)
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        return cfg.resolved()
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def _cmd_simulate(args, out):
    cfg = config_from_args(args)
    if args.dump_config:
        out.write(cfg.to_json())
        return EXIT_OK
    try:
        results = run_sweep(cfg, with_regions=args.with_regions)
    except SimulationError as exc:
        if exc.trace is not None and len(exc.trace):
            path = os.path.join(cfg.output_dir, "failed_trace.csv")
            write_atomic(path, exc.trace.to_csv())
            print(f"partial trace written to {path}", file=sys.stderr)
        print(f"controller failure: {exc}", file=sys.stderr)
        return EXIT_CONTROLLER
    paths = write_results(results, cfg.output_dir)
    for r in results:
        m = r.metrics
        out.write(f"{r.case} {r.method:<7} theta={r.theta:<5g} rmse={m.rmse:.4e} "
                  f"maxae={m.maxae:.4e} nrmse={m.nrmse:.4e} tv_u={r.trace.input_variation:.5g} "
                  f"fallbacks={r.fallback_count}\n")
    out.write(f"wrote {len(paths)} files to {cfg.output_dir}\n")
    return EXIT_OK


def _cmd_regions(args, out):
    cfg = config_from_args(args)
    if args.dump_config:
        out.write(cfg.to_json())
        return EXIT_OK
    methods = cfg.method_list()
    bad = [m for m in methods if m not in REGION_METHODS]
    if bad:
        raise ConfigError("method", f"{bad[0]!r} has no explicit mpQP form; use one of "
                          f"{', '.join(REGION_METHODS)}")
    jobs = [(m, float(t)) for m in methods for t in cfg.thetas]
    if args.export and len(jobs) != 1:
        raise ConfigError("export", "needs exactly one method and one theta")
    setup = Setup.from_config(cfg)
    for method, theta in jobs:
        law = setup.law(method, theta)
        cov = coverage_report(law, cfg.samples, seed=cfg.seed)
        if law.partial:
            print(f"warning: region cap {cfg.max_regions} reached for {method} theta={theta:g};"
                  " the law is partial", file=sys.stderr)
        path = args.export or os.path.join(
            cfg.output_dir, f"law_{case_label(cfg)}_{method}_theta{theta_tag(theta)}.json")
        write_atomic(path, law.to_json())
        out.write(f"{case_label(cfg)} {method} theta={theta:g} regions={len(law)} "
                  f"skipped={law.skipped} partial={str(law.partial).lower()} "
                  f"hit={cov.hit_fraction:.4f} infeasible={cov.infeasible_fraction:.4f} "
                  f"miss={cov.miss_fraction:.4f} -> {path}\n")
    return EXIT_OK


def _cmd_table2(args, out):
    seed = seed_from_env() if args.seed is None else args.seed
    if args.jobs < 1:
        raise ConfigError("jobs", "must be >= 1")
    try:
        tab = table2(jobs=args.jobs, with_regions=not args.no_regions, seed=seed)
    except SimulationError as exc:
        print(f"controller failure: {exc}", file=sys.stderr)
        return EXIT_CONTROLLER
    out.write(tab.format())
    if args.output_dir:
        lines = ["case,method,theta,rmse,maxae,nrmse,regions,tv_u,reported_rmse,low,high,pass"]
        for r in tab.rows:
            lines.append(",".join([r.case, r.method, repr(r.theta), repr(r.rmse), repr(r.maxae),
                                   repr(r.nrmse), "" if r.regions is None else str(r.regions),
                                   repr(r.tv_u), repr(r.reported), repr(r.low), repr(r.high),
                                   str(int(r.passed))]))
        write_atomic(os.path.join(args.output_dir, "table2.csv"), "\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_dump(args, out):
    cfg = config_from_args(args)
    if args.what == "config" or args.dump_config:
        out.write(cfg.to_json())
    elif args.what == "model":
        out.write(json.dumps(Setup.from_config(cfg).model.to_dict(), indent=2) + "\n")
    else:
        setup = Setup.from_config(cfg)
        out.write("t,r1\n")
        for k in range(setup.steps):
            t = k * setup.model.ts
            out.write(f"{t!r},{float(setup.reference.value_at(t)[0])!r}\n")
    return EXIT_OK


def _cmd_plotdata(args, out):
    traces = {}
    for path in args.traces:
        try:
            with open(path, encoding="utf-8") as fh:
                traces[os.path.splitext(os.path.basename(path))[0]] = \
                    SimulationTrace.from_csv(fh.read())
        except OSError as exc:
            raise ConfigError("traces", f"cannot read {path} ({exc})") from None
        except (ValueError, IndexError) as exc:
            raise ConfigError("traces", f"{path} is not a trace CSV ({exc})") from None
    text = long_format(traces)
    if args.output:
        write_atomic(args.output, text)
    else:
        out.write(text)
    return EXIT_OK


_COMMANDS = {"simulate": _cmd_simulate, "regions": _cmd_regions, "table2": _cmd_table2,
             "dump": _cmd_dump, "plotdata": _cmd_plotdata}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:
        # reader closed early (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
