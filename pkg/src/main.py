"""
Command-line entry point: `python -m src.main <command> ...`

Commands follow the experiment lifecycle:

1.  **datagen**: sample problem instances, solve them with semismooth
    Newton and write a dataset file; prints active-set statistics.
2.  **solve**: run one classical solver on one stored record.
3.  **train**: train an unrolled network (or the FNO baseline) from a
    key=value run file plus `--set` overrides.
4.  **eval**: metrics table of a checkpoint on a dataset, optionally on a
    resampled grid.
5.  **bench**: mean time and iteration count of the classical solvers.
6.  **verify**: the property suite.

Exit codes: 0 success, 1 usage or configuration error, 2 verification
failure, 3 non-convergence (solver tolerance not reached, non-finite
training loss).
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from . import config
from .benchmark import METHODS, bench, solve_record
from .checkpoint import load_checkpoint
from .dataset import active_set_statistics, gen_dataset, read_dataset
from .experiment_config import EXPERIMENTS
from .field import relative_error
from .pde import PdeOperator, kind_for_experiment
from .run_parameters import RunParameterManager
from .train import evaluate, train_from_parameters
from .verify import run_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_NOT_CONVERGED = 3


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_report(frame, path: Optional[str]) -> None:
    print(frame.to_string(index=False))
    if not path:
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False)
    logging.info(f"💾 Wrote report to {path}")


def cmd_datagen(args) -> int:
    if args.out is None:
        args.out = os.path.join(config.DATA_DIR, f"{args.problem}-m{args.m}-n{args.n}-s{args.seed}.bin")
    dataset = gen_dataset(args.problem, args.n, args.m, args.seed, out_path=args.out,
                          m_t=args.mt, threads=args.threads, amplitude=args.amplitude)
    _write_report(active_set_statistics(dataset).to_frame(), None)
    return EXIT_OK if len(dataset) == args.n else EXIT_NOT_CONVERGED


def cmd_solve(args) -> int:
    dataset = read_dataset(args.data)
    record = dataset[args.index]
    operator = PdeOperator(kind_for_experiment(dataset.kind), dataset.domain)
    state, report = solve_record(dataset.kind, operator, record, args.method,
                                 rtol=args.rtol, use_reference=args.reference)
    rel = relative_error(state.u, record.u_star)
    print(f"method: {report.method}")
    print(f"iterations: {report.iterations}")
    print(f"final residual: {report.residual_history[-1]:.6e}")
    print(f"eps_rel: {rel:.6e}")
    print(f"wall time: {report.wall_time:.4f}s")
    print(f"converged: {report.converged}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_train(args) -> int:
    overrides = list(args.set or [])
    if args.threads is not None:
        overrides.append(f"runtime.threads={args.threads}")
    params = RunParameterManager.from_sources(args.config, overrides)
    try:
        result = train_from_parameters(params)
    except FloatingPointError as e:
        logging.error(f"❌ Training aborted: {e}")
        return EXIT_NOT_CONVERGED
    if len(result.curve):
        print(result.curve.tail(1).to_string(index=False))
    print(f"parameters: {result.net.parameter_count()}")
    return EXIT_OK


def cmd_eval(args) -> int:
    net = load_checkpoint(args.ckpt)
    dataset = read_dataset(args.data)
    table = evaluate(net, dataset, resample_to=args.resample, threads=args.threads)
    _write_report(table, args.report)
    return EXIT_OK


def cmd_bench(args) -> int:
    dataset = read_dataset(args.data)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    net = load_checkpoint(args.ckpt) if args.ckpt else None
    result = bench(dataset, methods, rtol=args.rtol, net=net)
    _write_report(result.table, args.report)
    return EXIT_OK if result.failures == 0 else EXIT_NOT_CONVERGED


def cmd_verify(args) -> int:
    table = run_suite(seed=args.seed)
    _write_report(table, args.report)
    failed = int((~table["passed"]).sum())
    if failed:
        logging.error(f"❌ {failed} of {len(table)} verify sections failed")
        return EXIT_VERIFY
    logging.info(f"✅ All {len(table)} verify sections passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="python -m src.main",
                     description="Unrolled Uzawa networks for nonsmooth optimal control")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging.")
    parser.add_argument("--threads", type=int, default=None,
                        help="Worker threads (default: IUZAWA_THREADS).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="Generate a dataset file.")
    p.add_argument("--problem", choices=EXPERIMENTS, required=True)
    p.add_argument("--m", type=int, required=True, help="Spatial resolution.")
    p.add_argument("--mt", type=int, default=None, help="Time resolution (parabolic).")
    p.add_argument("--n", type=int, required=True, help="Number of records.")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="Output file (default: under IUZAWA_DATA_DIR).")
    p.add_argument("--amplitude", type=float, default=None,
                   help="Sampling amplitude (default: IUZAWA_GRF_AMPLITUDE).")
    p.set_defaults(handler=cmd_datagen)

    p = sub.add_parser("solve", help="Solve one stored record.")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("--reference", action="store_true",
                   help="Stop on relative error against the stored control.")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("train", help="Train a network.")
    p.add_argument("--config", default=None, help="key = value run file.")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="Override one run parameter (repeatable).")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint.")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--resample", type=int, default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bench", help="Benchmark the classical solvers.")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("--ckpt", default=None, help="Add a trained network as a row.")
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("verify", help="Run the property suite.")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, configure logging and run one command; returns the exit code."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    log_level = logging.DEBUG if args.debug or config.DEBUG else logging.INFO
    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(levelname)s - %(message)s",
        stream=sys.stdout,
        force=True,
    )
    if args.threads is not None and args.threads < 1:
        logging.error(f"❌ --threads must be >= 1, got {args.threads}")
        return EXIT_USAGE
    if args.threads is None and args.command != "train":
        args.threads = config.THREADS

    try:
        return args.handler(args)
    except (ValueError, KeyError, IndexError, OSError) as e:
        logging.error(f"❌ {args.command} failed: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
