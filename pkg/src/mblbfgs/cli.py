"""Command-line front end for running experiment grids.

Flags may also come from a plain ``key=value`` file (one per line, using the
flag names without the leading dashes); command-line flags override the
file. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric abort
in at least one cell.
"""
from __future__ import annotations

import argparse
import sys

from .driver import METHODS, StepSchedule
from .errors import ConfigurationError, DataError, MblbfgsError, UsageError
from .experiment import ExperimentSpec, run_experiment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2
        raise UsageError(message)


def parse_step(text: str) -> StepSchedule:
    kind, _, rest = text.partition(":")
    try:
        if kind == "constant":
            return StepSchedule("constant", float(rest))
        if kind == "diminishing":
            return StepSchedule("diminishing", float(rest))
        if kind == "sqrt":
            c, tau = rest.split(",")
            return StepSchedule("sqrt_horizon", float(c), int(tau))
    except (ValueError, ConfigurationError) as exc:
        raise UsageError(f"bad --step value {text!r}: {exc}") from None
    raise UsageError(f"bad --step value {text!r}: expected "
                     "constant:<a>, diminishing:<b> or sqrt:<c>,<tau>")


def parse_scaling(text: str):
    if text == "bb":
        return "bb"
    if text.startswith("fixed:"):
        try:
            return float(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad --scaling value {text!r}") from None
    raise UsageError(f"bad --scaling value {text!r}: expected bb or fixed:<g>")


def _float_list(text: str) -> list:
    try:
        return [float(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise UsageError(f"bad numeric list {text!r}") from None


def _int_list(text: str) -> list:
    try:
        return [int(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None


def build_parser() -> _Parser:
    p = _Parser(prog="mblbfgs", description="Multi-batch L-BFGS experiment runner")
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--dataset", help="LIBSVM file with the training data")
    p.add_argument("--synthetic", help="n,d,nnz,margin for generated data")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--objective", default="logistic_l2",
                   choices=["logistic_l2", "sigmoid_lsq", "quadratic"])
    p.add_argument("--sigma", type=float, default=None,
                   help="regularization; defaults to 1/n for logistic_l2")
    p.add_argument("--method", action="append", default=None,
                   help=f"one of {', '.join(METHODS)}; repeatable")
    p.add_argument("--strategy", default="1", choices=["1", "2", "fault"])
    p.add_argument("--batch-frac", default="0.05", help="comma list of r values")
    p.add_argument("--overlap-frac", default="0.2", help="comma list of o values")
    p.add_argument("--nodes", type=int, default=16)
    p.add_argument("--fail-prob", default="0.0", help="comma list of p values")
    p.add_argument("--memory", type=int, default=10)
    p.add_argument("--cautious-eps", type=float, default=1e-4)
    p.add_argument("--scaling", default="bb", help="bb or fixed:<g>")
    p.add_argument("--step", action="append", default=None,
                   help="constant:<a>, diminishing:<b> or sqrt:<c>,<tau>; repeatable")
    p.add_argument("--epochs", type=float, default=10.0)
    p.add_argument("--seed", default="0", help="comma list of seeds")
    p.add_argument("--trace-stride", type=int, default=None)
    p.add_argument("--reshard-each-epoch", action="store_true")
    p.add_argument("--out", default="runs",
                   help="output directory (env MBLBFGS_OUT overrides)")
    return p


def _read_config_file(path) -> list:
    """Turn key=value lines into argv tokens, preserving file order."""
    argv = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value")
                key, value = (part.strip() for part in line.split("=", 1))
                if key == "reshard-each-epoch":
                    if value.lower() in ("1", "true", "yes"):
                        argv.append("--reshard-each-epoch")
                    continue
                argv.extend([f"--{key}", value])
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    return argv


def build_spec(args) -> ExperimentSpec:
    if args.synthetic is not None:
        parts = _float_list(args.synthetic)
        if len(parts) != 4:
            raise UsageError("--synthetic expects n,d,nnz,margin")
        synthetic = tuple(parts)
    else:
        synthetic = None
    methods = args.method or ["robust_lbfgs"]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    schedules = [parse_step(s) for s in (args.step or ["constant:0.1"])]
    mode = {"1": "strategy1", "2": "strategy2", "fault": "fault"}[args.strategy]
    return ExperimentSpec(
        dataset_path=args.dataset,
        synthetic=synthetic,
        data_seed=args.data_seed,
        objective=args.objective,
        sigma=args.sigma,
        mode=mode,
        methods=methods,
        batch_fracs=_float_list(args.batch_frac),
        overlap_fracs=_float_list(args.overlap_frac),
        schedules=schedules,
        fail_probs=_float_list(args.fail_prob),
        seeds=_int_list(args.seed),
        nodes=args.nodes,
        memory=args.memory,
        cautious_eps=args.cautious_eps,
        scaling=parse_scaling(args.scaling),
        epochs=args.epochs,
        trace_stride=args.trace_stride,
        reshard_each_epoch=args.reshard_each_epoch,
        out_dir=args.out,
    )


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        pre, _ = parser.parse_known_args(argv)
        if pre.config:
            argv = _read_config_file(pre.config) + argv
        args = parser.parse_args(argv)
        spec = build_spec(args)
        result = run_experiment(spec)
    except (UsageError, ConfigurationError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MblbfgsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name, status in result.statuses:
        print(f"{name}: {status}")
    print(f"manifest: {result.manifest_path}")
    return EXIT_NUMERIC if result.aborted_cells else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
