"""End-to-end toy replication: train teacher PEFT, transfer modules, and
compare a transfer-initialized student against a fresh baseline.

Both student runs share seeds and data order, so any difference comes
from the initialization alone. Reports are canonical JSON (sorted keys,
fixed separators) so identical configs produce byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .layermap import SKIP, plan_layers
from .pipeline import transfer
from .toy import (
    MATCHING,
    PairConfig,
    ToyTask,
    build_pair,
    capture_samples,
    train_peft,
)


@dataclass(frozen=True)
class ExperimentConfig:
    pair: PairConfig = field(default_factory=PairConfig)
    strategy: str = SKIP
    skip_offset: int | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    epochs: int = 3
    teacher_epochs: int = 3
    lr: float = 0.5
    batch_size: int = 64
    n_train: int = 4096
    n_val: int = 512
    tokens: int = 4
    sample_count: int = 1024
    transfer_head: bool | None = None  # default: only in matching mode

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        pair_keys = PairConfig.__dataclass_fields__.keys()
        pair = PairConfig(**{k: raw.pop(k) for k in list(raw) if k in pair_keys})
        if "seeds" in raw:
            raw["seeds"] = tuple(raw["seeds"])
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(pair=pair, **raw)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _run_seed(config: ExperimentConfig, seed: int) -> dict:
    pair_cfg = PairConfig(**{**asdict(config.pair), "seed": seed})
    task = ToyTask.generate(
        seed=seed,
        d_in=pair_cfg.d_in,
        tokens=config.tokens,
        n_classes=pair_cfg.n_classes,
        n_train=config.n_train,
        n_val=config.n_val,
    )
    teacher, student = build_pair(pair_cfg)

    train_peft(
        teacher, task, epochs=config.teacher_epochs, lr=config.lr,
        batch=config.batch_size, shuffle_seed=seed,
    )
    teacher_acc = teacher.accuracy(task.val_x, task.val_y)

    plan = plan_layers(
        pair_cfg.teacher_depth, pair_cfg.student_depth, config.strategy, config.skip_offset
    )
    matching_dims = pair_cfg.d_teacher == pair_cfg.d_student
    samples = None
    if not matching_dims:
        n_inputs = max(2, -(-config.sample_count // config.tokens))
        samples = capture_samples(teacher, student, plan, task.train_x, n_inputs)
    transferred = transfer(teacher.peft_set(), plan, samples, pair_cfg.d_student)

    transfer_head = config.transfer_head
    if transfer_head is None:
        transfer_head = pair_cfg.mode == MATCHING
    if transfer_head and not matching_dims:
        raise ValueError("head transfer requires matching hidden dims")

    tm_student = student.clone()
    tm_student.load_peft(transferred)
    if transfer_head:
        tm_student.set_head(teacher.trainable["head_w"], teacher.trainable["head_b"])
    baseline = student.clone()

    tm_log = train_peft(
        tm_student, task, epochs=config.epochs, lr=config.lr,
        batch=config.batch_size, shuffle_seed=seed,
    )
    base_log = train_peft(
        baseline, task, epochs=config.epochs, lr=config.lr,
        batch=config.batch_size, shuffle_seed=seed,
    )

    tm_acc = tm_log["epochs"][-1]["val_accuracy"]
    base_acc = base_log["epochs"][-1]["val_accuracy"]
    return {
        "seed": seed,
        "teacher_val_accuracy": teacher_acc,
        "tm_step0_loss": tm_log["step0_loss"],
        "baseline_step0_loss": base_log["step0_loss"],
        "tm_val_accuracy": tm_acc,
        "baseline_val_accuracy": base_acc,
        "accuracy_delta": tm_acc - base_acc,
        "tm_rel_gap_to_teacher": tm_acc - teacher_acc,
        "baseline_rel_gap_to_teacher": base_acc - teacher_acc,
    }


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every seed and summarize; deterministic for a fixed config."""
    per_seed = [_run_seed(config, s) for s in config.seeds]
    n = len(per_seed)
    summary = {
        "seeds": n,
        "mean_teacher_val_accuracy": sum(r["teacher_val_accuracy"] for r in per_seed) / n,
        "mean_tm_step0_loss": sum(r["tm_step0_loss"] for r in per_seed) / n,
        "mean_baseline_step0_loss": sum(r["baseline_step0_loss"] for r in per_seed) / n,
        "mean_tm_val_accuracy": sum(r["tm_val_accuracy"] for r in per_seed) / n,
        "mean_baseline_val_accuracy": sum(r["baseline_val_accuracy"] for r in per_seed) / n,
        "mean_accuracy_delta": sum(r["accuracy_delta"] for r in per_seed) / n,
        "step0_loss_wins": sum(
            1 for r in per_seed if r["tm_step0_loss"] < r["baseline_step0_loss"]
        ),
    }
    return {
        "config": {
            "pair": asdict(config.pair),
            "strategy": config.strategy,
            "skip_offset": config.skip_offset,
            "seeds": list(config.seeds),
            "epochs": config.epochs,
            "teacher_epochs": config.teacher_epochs,
            "lr": config.lr,
            "batch_size": config.batch_size,
            "n_train": config.n_train,
            "n_val": config.n_val,
            "tokens": config.tokens,
            "sample_count": config.sample_count,
            "transfer_head": config.transfer_head,
        },
        "per_seed": per_seed,
        "summary": summary,
    }


def report_table(report: dict) -> str:
    """Plain-text table of the per-seed results plus the summary row."""
    cols = [
        ("seed", "seed", ">10d"),
        ("teacher", "teacher_val_accuracy", ">10.4f"),
        ("tm_step0", "tm_step0_loss", ">10.4f"),
        ("base_step0", "baseline_step0_loss", ">10.4f"),
        ("tm_acc", "tm_val_accuracy", ">10.4f"),
        ("base_acc", "baseline_val_accuracy", ">10.4f"),
        ("delta", "accuracy_delta", ">+10.4f"),
    ]
    lines = ["  ".join(f"{h:>10}" for h, _, _ in cols)]
    for r in report["per_seed"]:
        lines.append("  ".join(format(r[key], fmt) for _, key, fmt in cols))
    s = report["summary"]
    lines.append(
        f"{'mean':>10}  {s['mean_teacher_val_accuracy']:>10.4f}  "
        f"{s['mean_tm_step0_loss']:>10.4f}  {s['mean_baseline_step0_loss']:>10.4f}  "
        f"{s['mean_tm_val_accuracy']:>10.4f}  {s['mean_baseline_val_accuracy']:>10.4f}  "
        f"{s['mean_accuracy_delta']:>+10.4f}"
    )
    lines.append(
        f"step0 wins: {s['step0_loss_wins']}/{s['seeds']}"
    )
    return "\n".join(lines)
