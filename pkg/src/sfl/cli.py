"""Batch command line: ``sfl {cascade,integrate,picard,dimension,golden}``.

Exit codes: 0 success, 2 domain error, 3 precision error, 64 usage error.
Data goes to stdout (or ``--output``); diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

from . import cascade, fracdim, genint, picardx
from .bigscale import DEFAULT_PRECISION, MAX_PRECISION_BITS, big, required_precision
from .cascade import SCHEMA_VERSION, CascadeConfig, RescalingSchedule
from .errors import PrecisionError, SFLError

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_PRECISION = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _warn(msg: str) -> None:
    print(f"sfl: warning: {msg}", file=sys.stderr)


def _decimal_arg(text: str) -> str:
    """Validate a number but keep its decimal text so it is parsed at full precision."""
    try:
        big(text, 64)
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    return text


def _schedule_arg(text: str) -> RescalingSchedule:
    try:
        return RescalingSchedule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _interval_arg(text: str) -> tuple[str, str]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"interval must look like LO:HI, got {text!r}")
    return _decimal_arg(parts[0]), _decimal_arg(parts[1])


def _default_seed() -> int:
    raw = os.environ.get("SFL_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SFL_SEED must be an integer, got {raw!r}")


def _common(default_format: str) -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, help="RNG seed (default: $SFL_SEED or 0)")
    g.add_argument("--precision", type=int, default=DEFAULT_PRECISION,
                   help="working precision in bits; raised automatically when too low")
    g.add_argument("--format", choices=("csv", "json"), default=default_format)
    g.add_argument("--output", help="write data here instead of stdout")
    g.add_argument("--config", help="key=value file mirroring the long flags")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sfl", description="Scale-free rescaling cascade laboratory.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cascade", parents=[_common("csv")], help="run a rescaling cascade")
    p.add_argument("--eta", type=_decimal_arg, action="append", required=True,
                   help="base scale in (0, 1); repeat for a sweep")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--schedule", type=_schedule_arg, default=RescalingSchedule.never())
    p.add_argument("--epsilon-fraction", type=_decimal_arg, default="0.1")
    p.add_argument("--pin-epsilon", action="store_true",
                   help="use the largest admissible epsilon instead of a random draw")
    p.set_defaults(handler=cmd_cascade)

    p = sub.add_parser("integrate", parents=[_common("json")],
                       help="generalized integral of a builtin integrand")
    p.add_argument("--f", dest="f", choices=sorted(genint.BUILTIN_INTEGRANDS), required=True)
    p.add_argument("--a", type=_decimal_arg, default="0")
    p.add_argument("--b", type=_decimal_arg, default="1")
    p.add_argument("--epsilon", type=_decimal_arg, default="0")
    p.add_argument("--eta", type=_decimal_arg, default="0.1")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--schedule", type=_schedule_arg, default=RescalingSchedule.never())
    p.add_argument("--panels", type=int, default=16)
    p.set_defaults(handler=cmd_integrate)

    p = sub.add_parser("picard", parents=[_common("json")], help="Picard iteration in ln t")
    p.add_argument("--rhs", choices=sorted(picardx.BUILTIN_RHS), required=True)
    p.add_argument("--tau0", type=_decimal_arg, default="1")
    p.add_argument("--interval", type=_interval_arg, default=("-0.5", "0.5"),
                   help="LO:HI in ln t, with LO < 0 < HI")
    p.add_argument("--grid-size", type=int, default=129)
    p.add_argument("--tol", type=_decimal_arg, default="1e-10")
    p.add_argument("--max-iter", type=int, default=30)
    p.add_argument("--epsilon", type=_decimal_arg, default="0",
                   help="nonzero switches to the extended iteration")
    p.add_argument("--eta", type=_decimal_arg, default="0.1")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--schedule", type=_schedule_arg, default=RescalingSchedule.never())
    p.set_defaults(handler=cmd_picard)

    p = sub.add_parser("dimension", parents=[_common("csv")], help="box-counting dimension")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--lambda", dest="lam", type=_decimal_arg,
                      help="evaluate sigma = 1 + lambda/(1 - lambda)")
    mode.add_argument("--cantor", action="store_true", help="cover an extended point")
    mode.add_argument("--t", dest="t", type=_decimal_arg, help="local dimension at t")
    p.add_argument("--epsilon", type=_decimal_arg, default="0.25")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--delta", type=_decimal_arg, default="0.25")
    p.add_argument("--anchor", type=_decimal_arg, default="0")
    p.add_argument("--epsilon-phi", type=_decimal_arg, default="0")
    p.set_defaults(handler=cmd_dimension)

    p = sub.add_parser("golden", parents=[_common("csv")], help="golden-mean continued fraction")
    p.add_argument("--iters", type=int, default=40)
    p.set_defaults(handler=cmd_golden)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    """Install values from ``--config`` as subparser defaults so flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(known.config, encoding="utf-8") as fh:
            cp.read_string("[sfl]\n" + fh.read())
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}")
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = subparsers.choices.get(command)
    if sub is None:
        return
    actions = {}
    for act in sub._actions:
        for opt in act.option_strings:
            actions[opt.lstrip("-").replace("-", "_")] = act
    defaults = {}
    for key, raw in cp["sfl"].items():
        act = actions.get(key.replace("-", "_"))
        if act is None or key == "config":
            raise UsageError(f"unknown config key: {key}")
        if isinstance(act, argparse._StoreTrueAction):
            value = cp["sfl"].getboolean(key)
        else:
            value = act.type(raw) if act.type else raw
            if isinstance(act, argparse._AppendAction):
                value = [act.type(v.strip()) if act.type else v.strip()
                         for v in raw.split(",")]
        if act.choices is not None and value not in act.choices:
            raise UsageError(f"invalid value for {key}: {raw!r}")
        defaults[act.dest] = value
    for act in sub._actions:
        if act.dest not in defaults:
            continue
        # argparse appends to a list default, so a sweep given on the command
        # line must replace the configured one rather than extend it.
        if isinstance(act, argparse._AppendAction) and any(
                a == opt or a.startswith(opt + "=") for a in argv for opt in act.option_strings):
            del defaults[act.dest]
        else:
            act.required = False
    for group in sub._mutually_exclusive_groups:
        if any(act.dest in defaults for act in group._group_actions):
            group.required = False
    sub.set_defaults(**defaults)


def _fix_negative_values(argv: list[str]) -> list[str]:
    """Join ``--interval -0.5:0.5`` so the value is not mistaken for an option."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--interval" and i + 1 < len(argv) and re.match(r"^-[\d.]", argv[i + 1]):
            out.append(f"--interval={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def _emit(args, text: str) -> None:
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _dumps(data) -> str:
    return json.dumps(data, indent=2) + "\n"


def _cascade_task(payload: tuple) -> dict:
    eta, depth, schedule, seed, frac, precision, pin = payload
    cfg = CascadeConfig(eta=eta, depth=depth, schedule=RescalingSchedule.parse(schedule),
                        seed=seed, epsilon_fraction=frac, precision=precision,
                        pin_epsilon=pin)
    return cascade.trace_to_dict(cascade.run_cascade(cfg))


def _base_precision(args) -> int:
    if args.precision < 64:
        raise UsageError("--precision must be at least 64 bits")
    if args.precision > MAX_PRECISION_BITS:
        raise PrecisionError(f"--precision {args.precision} exceeds the {MAX_PRECISION_BITS}-bit ceiling")
    return args.precision


def _checked_precision(args, eta: str, depth: int) -> int:
    _base_precision(args)
    need = required_precision(eta, depth)
    if need > args.precision:
        _warn(f"precision raised from {args.precision} to {need} bits for eta={eta}, depth={depth}")
        return need
    return args.precision


def cmd_cascade(args) -> int:
    payloads = []
    for index, eta in enumerate(args.eta):
        seed = args.seed ^ index if len(args.eta) > 1 else args.seed
        prec = _checked_precision(args, eta, max(args.depth, 0))
        payloads.append((eta, args.depth, str(args.schedule), seed, args.epsilon_fraction,
                         prec, args.pin_epsilon))
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_cascade_task, payloads))
    else:
        results = [_cascade_task(p) for p in payloads]

    if args.format == "json":
        if len(results) == 1:
            _emit(args, _dumps(results[0]))
        else:
            _emit(args, _dumps({"schema_version": SCHEMA_VERSION, "runs": results}))
        return EXIT_OK
    sweep = len(results) > 1
    header = (("task",) if sweep else ()) + cascade.TRACE_COLUMNS
    rows = []
    for index, res in enumerate(results):
        for lvl in res["levels"]:
            row = tuple(lvl[c] for c in cascade.TRACE_COLUMNS)
            rows.append(((index,) if sweep else ()) + row)
    _emit(args, _rows_to_csv(header, rows))
    return EXIT_OK


def _trace(args, prec: int) -> cascade.CascadeTrace:
    cfg = CascadeConfig(eta=args.eta, depth=args.depth, schedule=args.schedule,
                        seed=args.seed, precision=prec)
    return cascade.run_cascade(cfg)


def cmd_integrate(args) -> int:
    prec = _checked_precision(args, args.eta, args.depth)
    trace = _trace(args, prec)
    res = genint.extended_integral(genint.BUILTIN_INTEGRANDS[args.f], args.a, args.b,
                                   args.epsilon, trace, panels=args.panels)
    data = res.to_dict()
    if args.format == "json":
        _emit(args, _dumps(data))
        return EXIT_OK
    rows = [(k, data[k]) for k in ("riemann_part", "epsilon", "total",
                                   "residual_bound", "df_source")]
    rows += [(f"correction_{n}", v) for n, v in enumerate(data["correction_terms"], start=1)]
    _emit(args, _rows_to_csv(("quantity", "value"), rows))
    return EXIT_OK


def cmd_picard(args) -> int:
    prec = _checked_precision(args, args.eta, args.depth)
    lo, hi = (big(x, prec) for x in args.interval)
    rhs = picardx.BUILTIN_RHS[args.rhs]
    interval = (lo.exp(), hi.exp())
    common = dict(grid_size=args.grid_size, tol=args.tol, max_iter=args.max_iter,
                  precision=prec)
    epsilon = big(args.epsilon, prec)
    if epsilon.sign() == 0:
        run = picardx.picard_standard(rhs, args.tau0, interval, **common)
    else:
        run = picardx.picard_extended(rhs, args.tau0, interval, epsilon, _trace(args, prec),
                                      **common)
    print(f"converged={str(run.converged).lower()} iterations={run.iterations_used}"
          f" diverged={str(run.diverged).lower()}", file=sys.stderr)
    if args.format == "json":
        data = run.to_dict()
        data["diverged"] = run.diverged
        data["ln_t_grid"] = [u.to_decimal() for u in run.log_grid]
        _emit(args, _dumps(data))
    else:
        _emit(args, run.to_csv())
    return EXIT_OK


def cmd_dimension(args) -> int:
    prec = _base_precision(args)
    if args.lam is not None:
        lam = big(args.lam, prec)
        sigma = fracdim.sigma_from_lambda(lam)
        data = {"lambda": lam.to_decimal(), "sigma": sigma.to_decimal()}
    elif args.t is not None:
        est = fracdim.sigma_local(big(args.t, prec), big(args.epsilon_phi, prec))
        data = {"t": est.t.to_decimal(), "epsilon_phi": est.epsilon_phi.to_decimal(),
                "sigma_local": est.sigma_local.to_decimal()}
    else:
        spec = fracdim.CantorSpec.of(args.epsilon, args.depth, args.anchor, prec)
        report = fracdim.lambda_cascade_fit(spec, big(args.delta, prec))
        _emit(args, report.to_json() if args.format == "json" else report.to_csv())
        summary = report.summary()
        print(f"lambda_fit={summary['lambda_fit']} sigma={summary['sigma']}", file=sys.stderr)
        return EXIT_OK
    if args.format == "json":
        _emit(args, _dumps({"schema_version": SCHEMA_VERSION, **data}))
    else:
        _emit(args, _rows_to_csv(tuple(data), [tuple(data.values())]))
    return EXIT_OK


def cmd_golden(args) -> int:
    if args.iters < 1:
        raise UsageError("--iters must be >= 1")
    value = fracdim.golden_mean_cf(args.iters, _base_precision(args))
    if args.format == "json":
        _emit(args, _dumps({"schema_version": SCHEMA_VERSION, "iterations": args.iters,
                            "value": value.to_decimal()}))
    else:
        _emit(args, _rows_to_csv(("iterations", "value"), [(args.iters, value.to_decimal())]))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    argv = _fix_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.seed is None:
            args.seed = _default_seed()
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return args.handler(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"sfl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PrecisionError as exc:
        print(f"sfl: error: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except (SFLError, ZeroDivisionError) as exc:
        print(f"sfl: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
