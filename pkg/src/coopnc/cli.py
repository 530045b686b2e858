"""Command-line entry point.

Exit codes: 0 success, 2 unparsable configuration, 3 invalid parameters,
4 infeasible sizing.
"""

import argparse
import os
import sys
from contextlib import contextmanager
from dataclasses import replace

from .analytic import InfeasibleError
from .channel import ProfileError, validate_profile
from .config import ConfigError, build_config, load_config
from .harness import (
    ReportRow,
    SizeRow,
    histogram_command,
    run_experiment,
    size_command,
    write_csv,
)
from .stats import DomainError

OUTPUT_DIR_ENV = "COOPNC_OUTPUT_DIR"

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3, 4


def _shared(parser):
    parser.add_argument("config", nargs="?", help="key = value file; flags override it")
    for name in ("p1", "p2", "p12", "p21", "q"):
        parser.add_argument(f"--{name}", help=f"loss probability {name}")
    parser.add_argument("--np", help="primary packets per frame")
    parser.add_argument("--ns", help="secondary packets per frame")
    parser.add_argument("--cap", help="frame cap in slots, or 'inf' for adaptive frames")
    parser.add_argument("--pout", help="target outage probability (sizing)")
    parser.add_argument("--scheme", help="comma list of ARQ, SNC, ANC, or 'all'")
    parser.add_argument("--trials", help="Monte Carlo frames per point (0 = analysis only)")
    parser.add_argument("--seed", help="64-bit simulation seed")
    parser.add_argument("--model", help="normal moment model: exact or plugin")
    parser.add_argument("--out", help="output file, '-' for stdout")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="coopnc",
        description="Simulate and analyse cooperative ARQ / network-coded retransmission.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {
        "simulate": "simulated and analytic metrics per scheme",
        "analyze": "analytic metrics only (no simulation)",
        "sweep": "metrics over a range of one parameter",
        "size": "largest secondary load meeting the outage target",
        "hist": "empirical frame-size pmf next to the fitted normal",
    }
    for name, help_text in cmds.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        _shared(p)
        if name == "sweep":
            p.add_argument("--vary", help="parameter to sweep: p1 p2 p12 p21 q np ns cap")
            p.add_argument("--start")
            p.add_argument("--stop")
            p.add_argument("--step")
    return parser


def _load(args):
    entries, source = {}, "<config>"
    if args.config:
        entries, source = load_config(args.config), args.config
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    return build_config(entries, overrides, source)


@contextmanager
def _output(target, command):
    if target is None and os.environ.get(OUTPUT_DIR_ENV):
        target = os.path.join(os.environ[OUTPUT_DIR_ENV], f"{command}.csv")
    if target in (None, "-"):
        yield sys.stdout
        return
    with open(target, "w", newline="", encoding="utf-8") as fh:
        yield fh


def _run(args):
    exp = _load(args)
    if args.command == "analyze":
        exp = replace(exp, trials=0)
    if args.command == "sweep" and exp.sweep is None:
        raise ConfigError("sweep needs vary, start, stop and step", key="vary")

    if exp.sweep is None:
        validate_profile(exp.profile, exp.frame if exp.n_primary + exp.n_secondary else None)
        if args.command != "size":
            exp.policy.check(exp.frame)

    if args.command in ("simulate", "analyze", "sweep"):
        rows = run_experiment(exp)
        with _output(exp.out, args.command) as out:
            write_csv(ReportRow.header(), [r.cells() for r in rows], out)
        # a sweep keeps failed points as rows; a single point is just invalid
        if exp.sweep is None and any(r.status.startswith("error") for r in rows):
            print(f"coopnc: invalid parameters: {rows[0].status}", file=sys.stderr)
            return EXIT_INVALID
        return EXIT_OK

    if args.command == "size":
        rows = size_command(exp.profile, exp.n_primary, exp.cap, exp.target_outage,
                            exp.schemes, exp.trials, exp.seed, exp.model)
        with _output(exp.out, args.command) as out:
            write_csv(SizeRow.header(), [r.cells() for r in rows], out)
        return EXIT_OK

    if len(exp.schemes) != 1:
        raise ConfigError("hist takes exactly one scheme", key="scheme")
    if exp.trials < 1:
        raise ProfileError("hist needs trials >= 1", "trials")
    hist = histogram_command(exp.schemes[0], exp.profile, exp.frame, exp.policy,
                             exp.trials, exp.seed, exp.model)
    with _output(exp.out, args.command) as out:
        write_csv(hist.header, hist.cells(), out)
    ks = "n/a" if hist.ks is None else "%.6f" % hist.ks
    print(f"# {hist.scheme.name} fit mean={hist.fit_mean:.6f} std={hist.fit_std:.6f} "
          f"ks={ks} outage={hist.outage_rate:.6f}", file=sys.stderr)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"coopnc: config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleError as exc:
        print(f"coopnc: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ProfileError, DomainError) as exc:
        print(f"coopnc: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
