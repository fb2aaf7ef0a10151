"""Command-line entry point.

Every subcommand reads an optional ``--config`` file, applies ``--seed`` and
``--out`` (plus any ``--set key=value`` pairs) on top, runs, and prints a JSON
summary on stdout. Failures print a single JSON error record on stderr and
exit nonzero::

    {"error": "ConfigurationError", "message": "...", "exit_code": 2}
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments
from .config import config_hash, dump_config, load_config
from .data import write_csv
from .exceptions import ConfigurationError, CurriculumTeacherError, TransferError

log = logging.getLogger(__name__)

EXIT_CODES = {ConfigurationError: 2, TransferError: 3}

# subcommand -> experiment.kind it runs
RUN_COMMANDS = {
    "train": "train",
    "transfer": "transfer",
    "perturb": "perturb",
    "constrain": "constrain",
    "slow-lr": "slow_lr",
}


def _parse_set(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _config(args, **forced):
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seeds.global"] = str(args.seed)
    if args.out is not None:
        overrides["output"] = args.out
    if getattr(args, "checkpoint", None):
        overrides["experiment.teacher_checkpoint"] = args.checkpoint
    overrides.update(forced)
    return load_config(args.config, overrides)


def _write_config(cfg, out):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(dump_config(cfg))


def cmd_ingest(args):
    cfg = _config(args)
    out = Path(cfg.output)
    splits = experiments.prepare_splits(cfg)
    _write_config(cfg, out)
    files = {}
    for name, part in zip(("train", "validation", "test"), splits):
        path = out / f"{name}.csv"
        write_csv(path, part)
        files[name] = str(path)
    return {"command": "ingest", "rows": {n: p.n for n, p in zip(files, splits)},
            "n_features": splits.train.d, "files": files, "config_hash": config_hash(cfg)}


def cmd_curriculum(args):
    cfg = _config(args)
    out = Path(cfg.output)
    splits = experiments.prepare_splits(cfg)
    plan = experiments.build_plan(cfg, splits)
    _write_config(cfg, out)
    (out / "plan.json").write_text(json.dumps(plan.to_dict()))
    return {"command": "curriculum", "n": plan.n, "n_batches": plan.n_batches, "mode": plan.mode,
            "files": {"plan": str(out / "plan.json")}, "config_hash": config_hash(cfg)}


def _run(cfg, command):
    result = experiments.run(cfg)
    out = Path(cfg.output)
    _write_config(cfg, out)
    files = experiments.write_artifacts(result, out)
    return {"command": command, "summary": result.log.summary, "files": files,
            "config_hash": result.log.config_hash}


def cmd_baseline(args):
    cfg = _config(args, **{"experiment.kind": f"baseline_{args.kind}"})
    return _run(cfg, "baseline")


def cmd_experiment(args):
    cfg = _config(args, **{"experiment.kind": RUN_COMMANDS[args.command]})
    return _run(cfg, args.command)


def cmd_export(args):
    cfg = _config(args)
    log_path = Path(args.log) if args.log else Path(cfg.output) / "log.jsonl"
    runlog = experiments.RunLog.read(log_path)
    table = experiments.emit_policy_table(runlog, student_id=args.student)
    target = Path(args.table) if args.table else log_path.with_name("policy.csv")
    target.write_text(table)
    return {"command": "export", "rows": table.count("\n") - 1, "files": {"policy": str(target)}}


def build_parser():
    parser = argparse.ArgumentParser(prog="curriculum-teacher",
                                     description="RL-taught curriculum learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="override seeds.global")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.set_defaults(func=func)
        return p

    add("ingest", cmd_ingest, "load or generate data, split, and write CSVs")
    add("curriculum", cmd_curriculum, "score the training split and write the batch plan")
    add("train", cmd_experiment, "train a teacher, then run one greedy student")
    add("baseline", cmd_baseline, "run a batchwise or curriculum baseline").add_argument(
        "--kind", choices=("batchwise", "curriculum"), default="batchwise")
    for name in ("transfer", "perturb", "slow-lr"):
        add(name, cmd_experiment, f"run the {name} analysis").add_argument(
            "--checkpoint", help="saved teacher (sets experiment.teacher_checkpoint)")
    add("constrain", cmd_experiment, "train and evaluate with width forced to zero")
    export = add("export", cmd_export, "write the policy table CSV from a run log")
    export.add_argument("--log", help="log.jsonl to read (default: <out>/log.jsonl)")
    export.add_argument("--table", help="CSV path to write (default: next to the log)")
    export.add_argument("--student", type=int, default=None,
                        help="student id to tabulate (default: the last one)")
    return parser


def error_record(exc):
    record = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, TransferError):
        record["expected"] = exc.expected
        record["actual"] = exc.actual
    code = next((c for t, c in EXIT_CODES.items() if isinstance(exc, t)), 1)
    record["exit_code"] = code
    return record


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        payload = args.func(args)
    except (CurriculumTeacherError, OSError, ValueError, KeyError) as exc:
        record = error_record(exc)
        print(json.dumps(record, default=str), file=sys.stderr)
        return record["exit_code"]
    print(json.dumps(payload, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
