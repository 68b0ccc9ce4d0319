"""``gpamis`` command line: run, sweep, check, inspect."""

import argparse
import logging
import sys

from . import config as cfg
from .checks import CHECKS, run_checks
from .errors import ConfigError, GPAmisError
from .harness.data import describe, load_dataset
from .harness.experiment import run_experiment, run_sweep, write_run, write_sweep


def _common(parser):
    parser.add_argument("--config", help="config file (section.key = value lines)")
    parser.add_argument("--preset", choices=("default", "ard"), help="start from a shipped preset")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    parser.add_argument("--seed", type=int, help="same as --set run.seed=N")
    parser.add_argument("--out", help="same as --set run.out=DIR")
    parser.add_argument("--threads", type=int, help="same as --set run.threads=N")
    parser.add_argument("--sampler", help="same as --set sampler.name=NAME")
    parser.add_argument("--data", help="same as --set data.path=FILE")


def build_parser():
    parser = argparse.ArgumentParser(prog="gpamis", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run one sampler over all replicates"),
                       ("sweep", "run every sampler in sweep.samplers on a shared initialization"),
                       ("inspect", "describe the configured dataset and print the resolved config")):
        _common(sub.add_parser(name, help=text))
    check = sub.add_parser("check", help="run the desk-scale oracle checks")
    check.add_argument("--only", action="append", choices=list(CHECKS), help="run just this check; repeatable")
    check.add_argument("--seed", type=int, default=0)
    return parser


def resolve_config(args, env=None):
    overrides = list(args.overrides)
    for flag, key in (("seed", "run.seed"), ("out", "run.out"), ("threads", "run.threads"),
                      ("sampler", "sampler.name"), ("data", "data.path")):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key}={value}")
    base = cfg.parse(cfg.preset_path(args.preset)) if args.preset else None
    config = cfg.parse(args.config, base) if args.config else (base or cfg.default_config())
    return cfg.resolve_over(config, overrides, env)


def _load(config):
    if not config["data.path"]:
        raise ConfigError("data.path is required (set it in the config or pass --data FILE)")
    return load_dataset(config["data.path"], config["data.task"], config["data.subsample"] or None,
                        config["run.seed"], config["data.positive_class"] or None)


def cmd_run(config):
    result = run_experiment(config, dataset=_load(config))
    out = write_run(result, config, config["run.out"])
    q1, med, q3 = result.curve.q1[-1], result.curve.median[-1], result.curve.q3[-1]
    print(f"{result.sampler}: {len(result.traces)} replicate(s), final median {med:.6g} (IQR {q1:.6g} .. {q3:.6g})")
    print(f"wrote {out}")
    return 0


def cmd_sweep(config):
    results, errors = run_sweep(config, dataset=_load(config))
    for name, msg in errors.items():
        print(f"{name}: FAILED {msg}", file=sys.stderr)
    if results:
        out = write_sweep(results, config, config["run.out"])
        for name, r in results.items():
            print(f"{name}: final median {r.curve.median[-1]:.6g}")
        print(f"wrote {out}")
    return 1 if errors else 0


def cmd_inspect(config):
    info = describe(_load(config))
    for key, value in info.items():
        print(f"{key}: {value}")
    print()
    print(cfg.dump(config), end="")
    return 0


def cmd_check(args):
    results = run_checks(args.only, args.seed)
    width = max(len(n) for n, _, _ in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def main(argv=None, env=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.command == "check":
            return cmd_check(args)
        config = resolve_config(args, env)
        return {"run": cmd_run, "sweep": cmd_sweep, "inspect": cmd_inspect}[args.command](config)
    except ConfigError as exc:
        print(f"gpamis: config error: {exc}", file=sys.stderr)
        return 2
    except (GPAmisError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"gpamis: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
