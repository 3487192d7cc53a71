"""Command-line experiment harness.

Subcommands cover the full protocol: collect flight data under the
analytical controller, train the residual network (with or without the
energy penalty), run evaluation scenarios with a chosen controller, and
aggregate logs into a report.  `all` chains the whole pipeline.

Exit codes: 0 success, 1 usage or configuration error, 2 a run crashed,
3 numerical failure inside solver or training.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import (
    CheckpointFormatError,
    ConfigError,
    GapError,
    HoverInfeasibleError,
    LogFormatError,
    NonFiniteStateError,
)
from .evaluate import evaluate, format_report_table, write_report_csv
from .logs import _fmt, read_log_csv, write_log_csv
from .network import load_checkpoint, lr_schedule, save_checkpoint
from .ocp import DynamicsModel
from .scenarios import SCENARIO_BUILDERS, get_scenario
from .simulation import collect_data, run_scenario
from .training import make_labels, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CRASH = 2
EXIT_NUMERICAL = 3

CONTROLLERS = ("analytical", "l2", "energy")
EVAL_SCENARIOS = ("takeoff-hover", "circle", "setpoint")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage by default; 2 is reserved for
    # crash events here, so remap to the usage code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tiltmpc", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="experiment config file (INI sections)")
    parser.add_argument("--seed", type=_u64, default=None,
                        help="override training seed and plant noise seed")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    # the global flags are also accepted after the subcommand; SUPPRESS
    # keeps an absent occurrence from clobbering the top-level value
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, metavar="FILE")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS)

    p = sub.add_parser("collect", parents=[common],
                       help="record flight data under the analytical controller")
    p.add_argument("--minutes", type=_positive_float, required=True)
    p.add_argument("--out", required=True, metavar="CSV")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", parents=[common],
                       help="fit the residual network on a collected log")
    p.add_argument("--data", required=True, metavar="CSV")
    p.add_argument("--lambda-e", type=float, default=None,
                   help="energy penalty weight (default: config [train] lambda_e)")
    p.add_argument("--out", required=True, metavar="CKPT")
    p.add_argument("--curve", default=None, metavar="CSV",
                   help="optional per-epoch loss curve output")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", parents=[common],
                       help="run one scenario closed loop and log it")
    p.add_argument("--scenario", required=True, choices=sorted(SCENARIO_BUILDERS))
    p.add_argument("--controller", required=True, choices=CONTROLLERS)
    p.add_argument("--ckpt", default=None, metavar="CKPT",
                   help="checkpoint for the neural controllers")
    p.add_argument("--out", required=True, metavar="CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", parents=[common],
                       help="aggregate scenario logs into a metrics report")
    p.add_argument("--logs", nargs="+", required=True, metavar="CSV",
                   help="log files named <scenario>_<controller>.csv")
    p.add_argument("--out", required=True, metavar="CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("all", parents=[common],
                       help="collect, train both variants, run and report everything")
    p.add_argument("--out-dir", default="results", metavar="DIR")
    p.add_argument("--minutes", type=_positive_float, default=2.0,
                   help="length of the collection flight (default 2)")
    p.set_defaults(func=cmd_all)
    return parser


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(
            cfg,
            disturbance=replace(cfg.disturbance, rng_seed=args.seed),
            train=replace(cfg.train, seed=args.seed),
        )
    return cfg


def write_curve_csv(curve, path) -> None:
    """Per-epoch training losses; same 17-digit format as the logs."""
    with open(path, "w", newline="\n") as fh:
        fh.write("epoch,mean_l2,mean_energy,mean_total,lr\n")
        for epoch, bd in enumerate(curve):
            cells = [str(epoch), _fmt(bd.l2), _fmt(bd.energy),
                     _fmt(bd.total), _fmt(lr_schedule(epoch))]
            fh.write(",".join(cells) + "\n")


def _report_crash(log, label: str) -> int:
    print(f"{label} crashed ({log.crash_reason}) at t = {log.t[-1]:.2f} s",
          file=sys.stderr)
    return EXIT_CRASH


def cmd_collect(args, cfg: ExperimentConfig) -> int:
    log = collect_data(args.minutes, cfg.params, cfg.disturbance, cfg.ocp)
    write_log_csv(log, args.out)
    if log.crashed:
        return _report_crash(log, "collection flight")
    print(f"wrote {len(log)} rows to {args.out}")
    return EXIT_OK


def _train_on_log(data_path, cfg: ExperimentConfig, lambda_e, ckpt_path, curve_path):
    log = read_log_csv(data_path)
    dataset = make_labels(log, cfg.params, t_step=cfg.ocp.t_step)
    train_cfg = cfg.train if lambda_e is None else replace(cfg.train, lambda_e=lambda_e)
    result = train(dataset, train_cfg, cfg.params)
    save_checkpoint(result.net, ckpt_path)
    if curve_path is not None:
        write_curve_csv(result.curve, curve_path)
    last = result.curve[-1]
    print(f"trained on {len(dataset)} samples, lambda_e = {train_cfg.lambda_e:g}: "
          f"l2 {last.l2:.6f}, energy {last.energy:.6f} -> {ckpt_path}")
    return result


def cmd_train(args, cfg: ExperimentConfig) -> int:
    _train_on_log(args.data, cfg, args.lambda_e, args.out, args.curve)
    return EXIT_OK


def _controller_model(controller: str, ckpt_path) -> DynamicsModel:
    if controller == "analytical":
        return DynamicsModel()
    if ckpt_path is None:
        raise ConfigError(f"controller {controller!r} requires --ckpt")
    return DynamicsModel(mode="neural", network=load_checkpoint(ckpt_path))


def cmd_run(args, cfg: ExperimentConfig) -> int:
    scenario = get_scenario(args.scenario, cfg.params,
                            duration=cfg.scenario_durations.get(args.scenario))
    model = _controller_model(args.controller, args.ckpt)
    log = run_scenario(scenario, model, cfg.params, cfg.disturbance, cfg.ocp)
    write_log_csv(log, args.out)
    if log.crashed:
        return _report_crash(log, f"{args.scenario}/{args.controller}")
    print(f"wrote {len(log)} rows to {args.out}")
    return EXIT_OK


def _split_log_name(path) -> tuple:
    stem = Path(path).stem
    scenario, sep, controller = stem.rpartition("_")
    if not sep or not scenario or controller not in CONTROLLERS:
        raise ConfigError(
            f"cannot infer scenario/controller from {path!r}; "
            "expected <scenario>_<controller>.csv")
    return scenario, controller


def cmd_report(args, cfg: ExperimentConfig) -> int:
    entries = []
    for path in args.logs:
        scenario, controller = _split_log_name(path)
        entries.append((scenario, controller, read_log_csv(path)))
    report = evaluate(entries, cfg.params)
    write_report_csv(report, args.out)
    print(format_report_table(report))
    return EXIT_OK


def cmd_all(args, cfg: ExperimentConfig) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    data_path = out / "collect.csv"
    log = collect_data(args.minutes, cfg.params, cfg.disturbance, cfg.ocp)
    write_log_csv(log, data_path)
    if log.crashed:
        return _report_crash(log, "collection flight")
    print(f"collected {len(log)} rows -> {data_path}")

    ckpts = {"analytical": None}
    for name, lam in (("l2", 0.0), ("energy", None)):
        ckpts[name] = out / f"{name}.ckpt"
        _train_on_log(data_path, cfg, lam, ckpts[name], out / f"{name}_curve.csv")

    crashed = False
    entries = []
    for scenario_name in EVAL_SCENARIOS:
        scenario = get_scenario(scenario_name, cfg.params,
                                duration=cfg.scenario_durations.get(scenario_name))
        for controller in CONTROLLERS:
            model = _controller_model(controller, ckpts[controller])
            run_log = run_scenario(scenario, model, cfg.params, cfg.disturbance, cfg.ocp)
            path = out / f"{scenario_name}_{controller}.csv"
            write_log_csv(run_log, path)
            entries.append((scenario_name, controller, run_log))
            if run_log.crashed:
                _report_crash(run_log, f"{scenario_name}/{controller}")
                crashed = True
            else:
                print(f"ran {scenario_name}/{controller} -> {path}")

    report = evaluate(entries, cfg.params)
    write_report_csv(report, out / "report.csv")
    print(format_report_table(report))
    return EXIT_CRASH if crashed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:     # argparse handles --help and usage errors
        return int(exc.code or 0)
    cfg_error = None
    try:
        cfg = _experiment_config(args)
        return args.func(args, cfg)
    except (ConfigError, GapError, LogFormatError, CheckpointFormatError,
            OSError) as exc:
        cfg_error = exc
        code = EXIT_USAGE
    except (NonFiniteStateError, HoverInfeasibleError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        cfg_error = exc
        code = EXIT_NUMERICAL
    print(f"tiltmpc: error: {cfg_error}", file=sys.stderr)
    return code


def entrypoint() -> None:
    sys.exit(main())
