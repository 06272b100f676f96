"""Adapter and LoRA parameter groups, their forward math, and index surgery.

Weight layout is fixed: down/A projections are (bottleneck-or-rank x
d_model), up/B projections are (d_model x bottleneck-or-rank). Inputs in
the transposed layout are rejected rather than silently fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .assignment import AssignmentSolution
from .errors import ShapeMismatchError
from .matrix import Matrix, as_matrix

DEFAULT_BOTTLENECK = 96
DEFAULT_RANK = 8

ADAPTER = "adapter"
LORA = "lora"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class AdapterParams:
    """Bottleneck adapter: up(relu(down(h))) + h, ReLU fixed."""

    down_weight: Matrix  # (bottleneck, d_model)
    down_bias: np.ndarray  # (bottleneck,)
    up_weight: Matrix  # (d_model, bottleneck)
    up_bias: np.ndarray  # (d_model,)

    def __post_init__(self):
        dw = as_matrix(self.down_weight, name="down_weight")
        uw = as_matrix(self.up_weight, name="up_weight")
        db = np.asarray(self.down_bias, dtype=np.float64)
        ub = np.asarray(self.up_bias, dtype=np.float64)
        if dw.shape != (uw.shape[1], uw.shape[0]):
            raise ShapeMismatchError(
                f"down_weight {dw.shape} must be the transpose-shape of up_weight {uw.shape}"
            )
        if db.shape != (dw.shape[0],):
            raise ShapeMismatchError(
                f"down_bias length {db.shape} must match bottleneck {dw.shape[0]}"
            )
        if ub.shape != (uw.shape[0],):
            raise ShapeMismatchError(
                f"up_bias length {ub.shape} must match d_model {uw.shape[0]}"
            )
        object.__setattr__(self, "down_weight", _frozen(dw))
        object.__setattr__(self, "down_bias", _frozen(db))
        object.__setattr__(self, "up_weight", _frozen(uw))
        object.__setattr__(self, "up_bias", _frozen(ub))

    @property
    def d_model(self) -> int:
        return self.down_weight.shape[1]

    @property
    def bottleneck(self) -> int:
        return self.down_weight.shape[0]

    @classmethod
    def fresh(cls, d_model: int, bottleneck: int = DEFAULT_BOTTLENECK, *,
              rng: np.random.Generator | None = None) -> "AdapterParams":
        """Near-identity init: small random down projection, zero up projection."""
        rng = rng or np.random.default_rng(0)
        return cls(
            down_weight=rng.normal(0.0, 1.0 / np.sqrt(d_model), (bottleneck, d_model)),
            down_bias=np.zeros(bottleneck),
            up_weight=np.zeros((d_model, bottleneck)),
            up_bias=np.zeros(d_model),
        )


@dataclass(frozen=True)
class LoraParams:
    """Low-rank delta for one frozen projection: scaling * h A^T B^T."""

    a_weight: Matrix  # (rank, d_model)
    b_weight: Matrix  # (d_model, rank)
    scaling: float = 1.0

    def __post_init__(self):
        aw = as_matrix(self.a_weight, name="a_weight")
        bw = as_matrix(self.b_weight, name="b_weight")
        if aw.shape[0] != bw.shape[1]:
            raise ShapeMismatchError(
                f"rank mismatch: a_weight {aw.shape} vs b_weight {bw.shape}"
            )
        if aw.shape[1] != bw.shape[0]:
            raise ShapeMismatchError(
                f"d_model mismatch: a_weight {aw.shape} vs b_weight {bw.shape}"
            )
        object.__setattr__(self, "a_weight", _frozen(aw))
        object.__setattr__(self, "b_weight", _frozen(bw))
        object.__setattr__(self, "scaling", float(self.scaling))

    @property
    def d_model(self) -> int:
        return self.a_weight.shape[1]

    @property
    def rank(self) -> int:
        return self.a_weight.shape[0]

    @classmethod
    def fresh(cls, d_model: int, rank: int = DEFAULT_RANK, *, scaling: float = 1.0,
              rng: np.random.Generator | None = None) -> "LoraParams":
        """Random A, zero B, so the delta starts at exactly zero."""
        rng = rng or np.random.default_rng(0)
        return cls(
            a_weight=rng.normal(0.0, 1.0 / np.sqrt(d_model), (rank, d_model)),
            b_weight=np.zeros((d_model, rank)),
            scaling=scaling,
        )


@dataclass(frozen=True)
class LoraLayerParams:
    """LoRA factors for one layer's query and value projections."""

    query: LoraParams
    value: LoraParams

    def __post_init__(self):
        if self.query.d_model != self.value.d_model or self.query.rank != self.value.rank:
            raise ShapeMismatchError("query and value LoRA must share d_model and rank")


LayerParams = Union[AdapterParams, LoraLayerParams]


@dataclass(frozen=True)
class PeftModuleSet:
    """Per-layer Adapter or LoRA parameter groups for one model."""

    kind: str  # ADAPTER or LORA
    d_model: int
    per_layer: tuple[LayerParams, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in (ADAPTER, LORA):
            raise ValueError(f"unknown PEFT kind {self.kind!r}")
        if len(self.per_layer) < 1:
            raise ValueError("module set needs at least one layer")
        object.__setattr__(self, "per_layer", tuple(self.per_layer))
        want = AdapterParams if self.kind == ADAPTER else LoraLayerParams
        for l, p in enumerate(self.per_layer):
            if not isinstance(p, want):
                raise TypeError(f"layer {l}: expected {want.__name__}, got {type(p).__name__}")
            d = p.d_model if self.kind == ADAPTER else p.query.d_model
            if d != self.d_model:
                raise ShapeMismatchError(f"layer {l}: d_model {d} != set d_model {self.d_model}")
        widths = {
            (p.bottleneck if self.kind == ADAPTER else p.query.rank) for p in self.per_layer
        }
        if len(widths) != 1:
            raise ShapeMismatchError(f"layers disagree on bottleneck/rank: {sorted(widths)}")

    @property
    def num_layers(self) -> int:
        return len(self.per_layer)

    @property
    def inner_dim(self) -> int:
        """Bottleneck size for adapters, rank for LoRA."""
        p = self.per_layer[0]
        return p.bottleneck if self.kind == ADAPTER else p.query.rank


def _check_hidden(h, d_model: int) -> Matrix:
    h = as_matrix(h, name="h")
    if h.shape[1] != d_model:
        raise ShapeMismatchError(f"hidden state has {h.shape[1]} columns, expected d_model {d_model}")
    return h


def adapter_forward(p: AdapterParams, h: Matrix) -> Matrix:
    """Bottleneck adapter with residual: h + up(relu(down(h)))."""
    h = _check_hidden(h, p.d_model)
    pre = h @ p.down_weight.T + p.down_bias
    act = np.maximum(pre, 0.0)
    return act @ p.up_weight.T + p.up_bias + h


def lora_delta(p: LoraParams, h: Matrix) -> Matrix:
    """The additive LoRA term scaling * h A^T B^T (not the base projection)."""
    h = _check_hidden(h, p.d_model)
    return p.scaling * ((h @ p.a_weight.T) @ p.b_weight.T)


def _gather_adapter(p: AdapterParams, idx: np.ndarray) -> AdapterParams:
    return AdapterParams(
        down_weight=p.down_weight[:, idx],
        down_bias=p.down_bias,
        up_weight=p.up_weight[idx, :],
        up_bias=p.up_bias[idx],
    )


def _gather_lora(p: LoraParams, idx: np.ndarray) -> LoraParams:
    return LoraParams(
        a_weight=p.a_weight[:, idx],
        b_weight=p.b_weight[idx, :],
        scaling=p.scaling,
    )


def apply_alignment(
    module_set: PeftModuleSet,
    per_layer_maps: list[AssignmentSolution] | tuple[AssignmentSolution, ...],
    d_student: int,
) -> PeftModuleSet:
    """Prune and reorder model-dim rows/columns by per-layer assignments.

    Each layer's mapping sends student dimension i to teacher dimension
    mapping[i]; unmapped teacher dimensions are dropped. Pure index
    surgery: no values are recomputed. Bottleneck/rank axes and the
    adapter down_bias (which lives in bottleneck space) are untouched.
    """
    if len(per_layer_maps) != module_set.num_layers:
        raise ShapeMismatchError(
            f"{len(per_layer_maps)} alignment maps for {module_set.num_layers} layers"
        )
    new_layers: list[LayerParams] = []
    for l, (params, sol) in enumerate(zip(module_set.per_layer, per_layer_maps)):
        idx = np.asarray(sol.mapping, dtype=np.int64)
        if idx.shape != (d_student,):
            raise ShapeMismatchError(
                f"layer {l}: mapping length {idx.shape[0]} != d_student {d_student}"
            )
        if idx.min() < 0 or idx.max() >= module_set.d_model:
            raise IndexError(
                f"layer {l}: mapping index out of range for teacher d_model {module_set.d_model}"
            )
        if module_set.kind == ADAPTER:
            new_layers.append(_gather_adapter(params, idx))
        else:
            new_layers.append(
                LoraLayerParams(
                    query=_gather_lora(params.query, idx),
                    value=_gather_lora(params.value, idx),
                )
            )
    return PeftModuleSet(kind=module_set.kind, d_model=d_student, per_layer=tuple(new_layers))
