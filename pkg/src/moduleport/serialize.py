"""Container naming conventions for module sets and sample batches.

Module sets store weights as f32 (checkpoint practice); sample batches
store embeddings as f64 because they feed correlation directly.
"""

from __future__ import annotations

import json

from .container import TensorContainer
from .errors import MalformedHeaderError
from .layermap import AVG, SKIP, LayerMapPlan
from .peft import (
    ADAPTER,
    LORA,
    AdapterParams,
    LoraLayerParams,
    LoraParams,
    PeftModuleSet,
)
from .pipeline import SampleBatch


def module_set_to_container(module_set: PeftModuleSet, *, dtype: str = "f32") -> TensorContainer:
    """Pack a module set under the layer_{l}/... naming convention."""
    c = TensorContainer(
        meta={
            "kind": module_set.kind,
            "d_model": str(module_set.d_model),
            "num_layers": str(module_set.num_layers),
        }
    )
    if module_set.kind == ADAPTER:
        c.meta["bottleneck"] = str(module_set.inner_dim)
        for l, p in enumerate(module_set.per_layer):
            c.add(f"layer_{l}/adapter/down.weight", p.down_weight, dtype)
            c.add(f"layer_{l}/adapter/down.bias", p.down_bias, dtype)
            c.add(f"layer_{l}/adapter/up.weight", p.up_weight, dtype)
            c.add(f"layer_{l}/adapter/up.bias", p.up_bias, dtype)
    else:
        c.meta["rank"] = str(module_set.inner_dim)
        c.meta["scaling"] = repr(module_set.per_layer[0].query.scaling)
        for l, p in enumerate(module_set.per_layer):
            c.add(f"layer_{l}/attn/query/lora_A", p.query.a_weight, dtype)
            c.add(f"layer_{l}/attn/query/lora_B", p.query.b_weight, dtype)
            c.add(f"layer_{l}/attn/value/lora_A", p.value.a_weight, dtype)
            c.add(f"layer_{l}/attn/value/lora_B", p.value.b_weight, dtype)
    return c


def _meta_int(c: TensorContainer, key: str) -> int:
    try:
        return int(c.meta[key])
    except (KeyError, ValueError) as exc:
        raise MalformedHeaderError(f"container meta missing or bad integer {key!r}") from exc


def container_to_module_set(c: TensorContainer) -> PeftModuleSet:
    """Inverse of :func:`module_set_to_container`."""
    kind = c.meta.get("kind")
    if kind not in (ADAPTER, LORA):
        raise MalformedHeaderError(f"container meta 'kind' must be adapter or lora, got {kind!r}")
    num_layers = _meta_int(c, "num_layers")
    d_model = _meta_int(c, "d_model")
    layers = []
    if kind == ADAPTER:
        for l in range(num_layers):
            base = f"layer_{l}/adapter"
            try:
                layers.append(
                    AdapterParams(
                        down_weight=c.tensor(f"{base}/down.weight"),
                        down_bias=c.tensor(f"{base}/down.bias").ravel(),
                        up_weight=c.tensor(f"{base}/up.weight"),
                        up_bias=c.tensor(f"{base}/up.bias").ravel(),
                    )
                )
            except KeyError as exc:
                raise MalformedHeaderError(f"missing adapter tensor for layer {l}: {exc}") from exc
    else:
        try:
            scaling = float(c.meta["scaling"])
        except (KeyError, ValueError) as exc:
            raise MalformedHeaderError("container meta missing or bad float 'scaling'") from exc
        for l in range(num_layers):
            base = f"layer_{l}/attn"
            try:
                layers.append(
                    LoraLayerParams(
                        query=LoraParams(
                            a_weight=c.tensor(f"{base}/query/lora_A"),
                            b_weight=c.tensor(f"{base}/query/lora_B"),
                            scaling=scaling,
                        ),
                        value=LoraParams(
                            a_weight=c.tensor(f"{base}/value/lora_A"),
                            b_weight=c.tensor(f"{base}/value/lora_B"),
                            scaling=scaling,
                        ),
                    )
                )
            except KeyError as exc:
                raise MalformedHeaderError(f"missing LoRA tensor for layer {l}: {exc}") from exc
    return PeftModuleSet(kind=kind, d_model=d_model, per_layer=tuple(layers))


def sample_batch_to_container(samples: SampleBatch) -> TensorContainer:
    """Pack matched embeddings as layer_{l}/student and layer_{l}/teacher."""
    c = TensorContainer(
        meta={
            "num_layers": str(samples.num_layers),
            "sample_count": str(samples.sample_count),
        }
    )
    if samples.plan is not None:
        c.meta["plan"] = json.dumps(
            {
                "strategy": samples.plan.strategy,
                "stride": samples.plan.stride,
                "groups": [list(g) for g in samples.plan.groups],
            },
            sort_keys=True,
            separators=(",", ":"),
        )
    for l, (xs, xt) in enumerate(samples.per_layer):
        c.add(f"layer_{l}/student", xs, "f64")
        c.add(f"layer_{l}/teacher", xt, "f64")
    return c


def container_to_sample_batch(c: TensorContainer) -> SampleBatch:
    """Inverse of :func:`sample_batch_to_container`."""
    num_layers = _meta_int(c, "num_layers")
    pairs = []
    for l in range(num_layers):
        try:
            pairs.append((c.tensor(f"layer_{l}/student"), c.tensor(f"layer_{l}/teacher")))
        except KeyError as exc:
            raise MalformedHeaderError(f"missing sample tensor for layer {l}: {exc}") from exc
    plan = None
    if "plan" in c.meta:
        try:
            raw = json.loads(c.meta["plan"])
            strategy = raw["strategy"]
            if strategy not in (SKIP, AVG):
                raise ValueError(f"bad strategy {strategy!r}")
            plan = LayerMapPlan(
                strategy=strategy,
                groups=tuple(tuple(int(i) for i in g) for g in raw["groups"]),
                stride=int(raw["stride"]),
            )
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise MalformedHeaderError(f"bad plan metadata: {exc}") from exc
    return SampleBatch(per_layer=tuple(pairs), plan=plan)
