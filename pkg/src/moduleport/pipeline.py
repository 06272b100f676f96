"""Four-phase transfer pipeline: sample intake, correlation, assignment,
pruning & alignment, composed with the layer map into one operation."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .assignment import AssignmentSolution, solve_lsa
from .errors import (
    MissingSamplesError,
    ShapeMismatchError,
    StudentWiderThanTeacherError,
    TooFewSamplesError,
)
from .layermap import LayerMapPlan, realize_plan
from .matrix import Matrix, as_matrix, pearson_correlation
from .peft import PeftModuleSet, apply_alignment

DEFAULT_SAMPLE_COUNT = 1024


def _thread_cap() -> int:
    raw = os.environ.get("MODULEPORT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"MODULEPORT_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"MODULEPORT_THREADS must be a positive integer, got {raw!r}")
    return n


@dataclass(frozen=True)
class SampleBatch:
    """Matched per-layer embeddings captured at the PEFT insertion points.

    Row i of a layer's student and teacher matrices comes from the same
    input token position.
    """

    per_layer: tuple[tuple[Matrix, Matrix], ...]
    plan: LayerMapPlan | None = None

    def __post_init__(self):
        if len(self.per_layer) < 1:
            raise ValueError("sample batch needs at least one layer")
        pairs = []
        for l, (xs, xt) in enumerate(self.per_layer):
            xs = as_matrix(xs, name=f"layer {l} student samples")
            xt = as_matrix(xt, name=f"layer {l} teacher samples")
            if xs.shape[0] != xt.shape[0]:
                raise ShapeMismatchError(
                    f"layer {l}: student has {xs.shape[0]} samples, teacher {xt.shape[0]}"
                )
            if xs.shape[0] < 2:
                raise TooFewSamplesError(f"layer {l}: need at least 2 samples, got {xs.shape[0]}")
            pairs.append((xs, xt))
        d_s = {xs.shape[1] for xs, _ in pairs}
        d_t = {xt.shape[1] for _, xt in pairs}
        if len(d_s) != 1 or len(d_t) != 1:
            raise ShapeMismatchError(
                f"layers disagree on dimensionality: student {sorted(d_s)}, teacher {sorted(d_t)}"
            )
        if pairs[0][0].shape[1] > pairs[0][1].shape[1]:
            raise StudentWiderThanTeacherError(
                f"student dim {pairs[0][0].shape[1]} exceeds teacher dim "
                f"{pairs[0][1].shape[1]}; only pruning (d_s <= d_t) is supported"
            )
        object.__setattr__(self, "per_layer", tuple(pairs))

    @property
    def num_layers(self) -> int:
        return len(self.per_layer)

    @property
    def d_student(self) -> int:
        return self.per_layer[0][0].shape[1]

    @property
    def d_teacher(self) -> int:
        return self.per_layer[0][1].shape[1]

    @property
    def sample_count(self) -> int:
        return self.per_layer[0][0].shape[0]


def align_layer(xs: Matrix, xt: Matrix) -> AssignmentSolution:
    """Best injective map from student dims to teacher dims for one layer.

    Maximizes the summed Pearson correlation by minimizing its negation;
    the returned total_score is the achieved correlation sum.
    """
    c = pearson_correlation(xs, xt)
    return solve_lsa(-c)


def _layer_result(xs: Matrix, xt: Matrix) -> tuple[AssignmentSolution, dict]:
    c = pearson_correlation(xs, xt)
    sol = solve_lsa(-c)
    selected = np.array([c[i, j] for i, j in enumerate(sol.mapping)])
    zero_var = int(np.sum(xs.std(axis=0) == 0.0)) + int(np.sum(xt.std(axis=0) == 0.0))
    stats = {
        "mean_selected_correlation": float(selected.mean()),
        "min_selected_correlation": float(selected.min()),
        "fraction_above_half": float(np.mean(selected > 0.5)),
        "zero_variance_columns": zero_var,
    }
    return sol, stats


def align_batch(samples: SampleBatch) -> tuple[list[AssignmentSolution], list[dict]]:
    """Align every layer; per-layer work may run on MODULEPORT_THREADS threads."""
    threads = _thread_cap()
    if threads == 1:
        results = [_layer_result(xs, xt) for xs, xt in samples.per_layer]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda p: _layer_result(*p), samples.per_layer))
    solutions = [sol for sol, _ in results]
    reports = [dict(stats, layer=l) for l, (_, stats) in enumerate(results)]
    return solutions, reports


def alignment_report(samples: SampleBatch) -> list[dict]:
    """Per-layer alignment quality summary (mean/min selected correlation,
    fraction of dims above 0.5, zero-variance column count)."""
    _, reports = align_batch(samples)
    return reports


def transfer(
    teacher_set: PeftModuleSet,
    plan: LayerMapPlan,
    samples: SampleBatch | None,
    d_student: int,
) -> PeftModuleSet:
    """Move teacher modules onto the student: layer map, then (if the
    hidden sizes differ) correlation-based pruning & alignment.

    Matching widths never touch parameter values, only layer selection
    or averaging. Mismatched widths require a sample batch consistent
    with the plan.
    """
    selected = realize_plan(teacher_set, plan)
    if teacher_set.d_model == d_student:
        return selected

    if d_student > teacher_set.d_model:
        raise StudentWiderThanTeacherError(
            f"student dim {d_student} exceeds teacher dim {teacher_set.d_model}; "
            "only pruning (d_s <= d_t) is supported"
        )
    if samples is None:
        raise MissingSamplesError(
            f"teacher dim {teacher_set.d_model} != student dim {d_student}: "
            "a sample batch is required for alignment"
        )
    if samples.num_layers != plan.student_layers:
        raise ShapeMismatchError(
            f"sample batch covers {samples.num_layers} layers, plan expects "
            f"{plan.student_layers}"
        )
    if samples.d_student != d_student or samples.d_teacher != teacher_set.d_model:
        raise ShapeMismatchError(
            f"sample dims ({samples.d_student}, {samples.d_teacher}) do not match "
            f"transfer dims ({d_student}, {teacher_set.d_model})"
        )
    solutions, _ = align_batch(samples)
    return apply_alignment(selected, solutions, d_student)
