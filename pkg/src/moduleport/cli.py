"""Command-line surface: one subcommand per pipeline phase.

Exit codes: 0 success, 1 usage error (bad flags, missing files,
irreconcilable configuration), 2 data/format error (malformed
containers, mismatched shapes).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .container import read_container, write_container
from .errors import (
    ContainerFormatError,
    LayerCountError,
    MissingSamplesError,
    ModuleportError,
    ShapeMismatchError,
    SizeLimitError,
    StudentWiderThanTeacherError,
    TooFewSamplesError,
)
from .experiment import ExperimentConfig, canonical_json, report_table, run_experiment
from .layermap import AVG, SKIP, plan_layers, realize_plan
from .pipeline import align_batch, transfer
from .peft import apply_alignment
from .serialize import (
    container_to_module_set,
    container_to_sample_batch,
    module_set_to_container,
    sample_batch_to_container,
)
from .toy import ToyModel, ToyTask, build_pair, capture_samples, train_peft


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _load_config(path: str) -> dict:
    p = _existing(path)
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a JSON object")
    return raw


def _experiment_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad experiment config: {exc}") from exc


def build_parser() -> _Parser:
    parser = _Parser(prog="moduleport", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map-layers", help="resolve mismatched layer counts (SKIP/AVG)")
    p.add_argument("modules", help="teacher module container")
    p.add_argument("out", help="output module container")
    p.add_argument("--strategy", choices=[SKIP, AVG], default=SKIP)
    p.add_argument("--skip-offset", type=int, default=None,
                   help="which layer of each group SKIP keeps (default: last)")
    p.add_argument("--student-layers", type=int, required=True)

    p = sub.add_parser("align", help="prune & align modules to a narrower student")
    p.add_argument("modules", help="module container (already at student depth)")
    p.add_argument("samples", help="matched sample container")
    p.add_argument("out", help="output module container")
    p.add_argument("--report", metavar="PREFIX",
                   help="also write PREFIX.json/.csv/.png alignment report")

    p = sub.add_parser("transfer", help="layer map plus (if dims differ) alignment")
    p.add_argument("modules", help="teacher module container")
    p.add_argument("out", help="output module container")
    p.add_argument("--strategy", choices=[SKIP, AVG], default=SKIP)
    p.add_argument("--skip-offset", type=int, default=None)
    p.add_argument("--student-layers", type=int, required=True)
    p.add_argument("--student-dim", type=int, required=True)
    p.add_argument("--samples", help="sample container, required when dims differ")

    toy = sub.add_parser("toy", help="desk-scale experiment harness")
    toysub = toy.add_subparsers(dest="toy_command", required=True)

    p = toysub.add_parser("build", help="build a teacher/student pair")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)

    p = toysub.add_parser("train", help="PEFT-train a toy model checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = toysub.add_parser("capture", help="capture matched embeddings")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--student", required=True)
    p.add_argument("--out", required=True)

    p = toysub.add_parser("experiment", help="full transfer-vs-baseline comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=None,
                   help="override: use seeds 0..N-1")
    p.add_argument("--report", metavar="PREFIX",
                   help="also write PREFIX.json/.csv/.png")

    return parser


def _cmd_map_layers(args) -> int:
    teacher = container_to_module_set(read_container(_existing(args.modules)))
    plan = plan_layers(teacher.num_layers, args.student_layers, args.strategy, args.skip_offset)
    result = realize_plan(teacher, plan)
    write_container(module_set_to_container(result), args.out)
    print(f"wrote {args.out}: {result.num_layers} layers, d_model {result.d_model}")
    return 0


def _cmd_align(args) -> int:
    modules = container_to_module_set(read_container(_existing(args.modules)))
    samples = container_to_sample_batch(read_container(_existing(args.samples)))
    if samples.d_teacher != modules.d_model:
        raise ShapeMismatchError(
            f"samples teacher dim {samples.d_teacher} != modules d_model {modules.d_model}"
        )
    if samples.num_layers != modules.num_layers:
        raise ShapeMismatchError(
            f"samples cover {samples.num_layers} layers, modules have {modules.num_layers}"
        )
    solutions, rows = align_batch(samples)
    aligned = apply_alignment(modules, solutions, samples.d_student)
    write_container(module_set_to_container(aligned), args.out)
    print(f"{'layer':>5}  {'mean_corr':>9}  {'min_corr':>9}  {'frac>0.5':>9}  {'zero_var':>8}")
    for r in rows:
        print(
            f"{r['layer']:>5}  {r['mean_selected_correlation']:>9.4f}  "
            f"{r['min_selected_correlation']:>9.4f}  {r['fraction_above_half']:>9.4f}  "
            f"{r['zero_variance_columns']:>8}"
        )
    if args.report:
        from .reporting import write_alignment_report

        for path in write_alignment_report(args.report, rows):
            print(f"wrote {path}")
    print(f"wrote {args.out}: {aligned.num_layers} layers, d_model {aligned.d_model}")
    return 0


def _cmd_transfer(args) -> int:
    teacher = container_to_module_set(read_container(_existing(args.modules)))
    plan = plan_layers(teacher.num_layers, args.student_layers, args.strategy, args.skip_offset)
    samples = None
    if args.samples:
        samples = container_to_sample_batch(read_container(_existing(args.samples)))
    result = transfer(teacher, plan, samples, args.student_dim)
    write_container(module_set_to_container(result), args.out)
    print(f"wrote {args.out}: {result.num_layers} layers, d_model {result.d_model}")
    return 0


def _cmd_toy_build(args) -> int:
    cfg = _experiment_config(_load_config(args.config))
    teacher, student = build_pair(cfg.pair)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, model in (("teacher", teacher), ("student", student)):
        path = out_dir / f"{name}.peftxfr"
        write_container(model.to_container(), path)
        print(f"wrote {path}: depth {model.depth}, d_model {model.d_model}")
    return 0


def _task_of(cfg: ExperimentConfig, seed: int) -> ToyTask:
    return ToyTask.generate(
        seed=seed,
        d_in=cfg.pair.d_in,
        tokens=cfg.tokens,
        n_classes=cfg.pair.n_classes,
        n_train=cfg.n_train,
        n_val=cfg.n_val,
    )


def _cmd_toy_train(args) -> int:
    cfg = _experiment_config(_load_config(args.config))
    model = ToyModel.from_container(read_container(_existing(args.model)))
    task = _task_of(cfg, cfg.pair.seed)
    log = train_peft(
        model, task, epochs=cfg.epochs, lr=cfg.lr, batch=cfg.batch_size,
        shuffle_seed=cfg.pair.seed,
    )
    write_container(model.to_container(), args.out)
    print(canonical_json(log))
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_toy_capture(args) -> int:
    cfg = _experiment_config(_load_config(args.config))
    teacher = ToyModel.from_container(read_container(_existing(args.teacher)))
    student = ToyModel.from_container(read_container(_existing(args.student)))
    task = _task_of(cfg, cfg.pair.seed)
    plan = plan_layers(teacher.depth, student.depth, cfg.strategy, cfg.skip_offset)
    n_inputs = max(2, -(-cfg.sample_count // cfg.tokens))
    samples = capture_samples(teacher, student, plan, task.train_x, n_inputs)
    write_container(sample_batch_to_container(samples), args.out)
    print(
        f"wrote {args.out}: {samples.num_layers} layers, "
        f"{samples.sample_count} samples, dims {samples.d_student}/{samples.d_teacher}"
    )
    return 0


def _cmd_toy_experiment(args) -> int:
    raw = _load_config(args.config)
    if args.seeds is not None:
        raw["seeds"] = list(range(args.seeds))
    cfg = _experiment_config(raw)
    report = run_experiment(cfg)
    print(report_table(report))
    print(canonical_json(report))
    if args.report:
        from .reporting import write_experiment_report

        for path in write_experiment_report(args.report, report):
            print(f"wrote {path}", file=sys.stderr)
    return 0


_DISPATCH = {
    "map-layers": _cmd_map_layers,
    "align": _cmd_align,
    "transfer": _cmd_transfer,
    ("toy", "build"): _cmd_toy_build,
    ("toy", "train"): _cmd_toy_train,
    ("toy", "capture"): _cmd_toy_capture,
    ("toy", "experiment"): _cmd_toy_experiment,
}

_USAGE_ERRORS = (UsageError, LayerCountError)
_DATA_ERRORS = (
    ContainerFormatError,
    ShapeMismatchError,
    StudentWiderThanTeacherError,
    MissingSamplesError,
    TooFewSamplesError,
    SizeLimitError,
    ModuleportError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        key = (args.command, args.toy_command) if args.command == "toy" else args.command
        return _DISPATCH[key](args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
