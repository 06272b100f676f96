"""Reconcile mismatched layer counts: SKIP picks one teacher layer per
student layer, AVG averages a contiguous group."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LayerCountError
from .peft import (
    ADAPTER,
    AdapterParams,
    LoraLayerParams,
    LoraParams,
    PeftModuleSet,
)

SKIP = "skip"
AVG = "avg"


@dataclass(frozen=True)
class LayerMapPlan:
    """One teacher-layer index group per student layer."""

    strategy: str  # SKIP or AVG
    groups: tuple[tuple[int, ...], ...]
    stride: int

    @property
    def student_layers(self) -> int:
        return len(self.groups)


def plan_layers(
    teacher_layers: int,
    student_layers: int,
    strategy: str = SKIP,
    skip_offset: int | None = None,
) -> LayerMapPlan:
    """Partition teacher layers into equal strides, one group per student layer.

    SKIP keeps index ``l*stride + skip_offset`` of each group (default
    offset stride-1, the last and most refined layer of the group); AVG
    keeps the whole group for elementwise averaging. Only exact integer
    ratios are supported.
    """
    if strategy not in (SKIP, AVG):
        raise ValueError(f"unknown strategy {strategy!r}, expected '{SKIP}' or '{AVG}'")
    if teacher_layers < 1 or student_layers < 1:
        raise LayerCountError("layer counts must be positive")
    if teacher_layers % student_layers != 0:
        raise LayerCountError(
            f"teacher layer count {teacher_layers} is not divisible by "
            f"student layer count {student_layers}"
        )
    stride = teacher_layers // student_layers
    if skip_offset is None:
        skip_offset = stride - 1
    if not 0 <= skip_offset < stride:
        raise LayerCountError(f"skip_offset {skip_offset} out of range [0, {stride})")

    if strategy == SKIP:
        groups = tuple((l * stride + skip_offset,) for l in range(student_layers))
    else:
        groups = tuple(
            tuple(range(l * stride, (l + 1) * stride)) for l in range(student_layers)
        )
    return LayerMapPlan(strategy=strategy, groups=groups, stride=stride)


def _avg_adapters(layers: list[AdapterParams]) -> AdapterParams:
    return AdapterParams(
        down_weight=np.mean([p.down_weight for p in layers], axis=0),
        down_bias=np.mean([p.down_bias for p in layers], axis=0),
        up_weight=np.mean([p.up_weight for p in layers], axis=0),
        up_bias=np.mean([p.up_bias for p in layers], axis=0),
    )


def _avg_lora(layers: list[LoraParams]) -> LoraParams:
    return LoraParams(
        a_weight=np.mean([p.a_weight for p in layers], axis=0),
        b_weight=np.mean([p.b_weight for p in layers], axis=0),
        scaling=layers[0].scaling,
    )


def realize_plan(teacher_set: PeftModuleSet, plan: LayerMapPlan) -> PeftModuleSet:
    """Materialize a student-depth module set from the teacher's layers.

    SKIP copies the selected layer's parameters bit-exactly. AVG takes
    the elementwise mean of raw parameters across the group -- for LoRA
    this averages the factors, not the low-rank products.
    """
    for group in plan.groups:
        for t in group:
            if not 0 <= t < teacher_set.num_layers:
                raise IndexError(
                    f"plan references teacher layer {t}, set has {teacher_set.num_layers}"
                )
    new_layers = []
    for group in plan.groups:
        selected = [teacher_set.per_layer[t] for t in group]
        if len(selected) == 1:
            new_layers.append(selected[0])
        elif teacher_set.kind == ADAPTER:
            new_layers.append(_avg_adapters(selected))
        else:
            new_layers.append(
                LoraLayerParams(
                    query=_avg_lora([p.query for p in selected]),
                    value=_avg_lora([p.value for p in selected]),
                )
            )
    return PeftModuleSet(
        kind=teacher_set.kind, d_model=teacher_set.d_model, per_layer=tuple(new_layers)
    )
