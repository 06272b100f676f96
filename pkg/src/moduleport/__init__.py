"""moduleport: offline transfer of Adapter/LoRA modules between
checkpoints with mismatched depth and hidden dimensionality."""

from .assignment import AssignmentSolution, brute_force_lsa, solve_lsa
from .container import TensorContainer, read_container, write_container
from .layermap import AVG, SKIP, LayerMapPlan, plan_layers, realize_plan
from .matrix import Matrix, column_stats, matmul, pearson_correlation
from .peft import (
    ADAPTER,
    LORA,
    AdapterParams,
    LoraLayerParams,
    LoraParams,
    PeftModuleSet,
    adapter_forward,
    apply_alignment,
    lora_delta,
)
from .pipeline import SampleBatch, align_layer, alignment_report, transfer

__all__ = [
    "ADAPTER",
    "AVG",
    "AdapterParams",
    "AssignmentSolution",
    "LORA",
    "LayerMapPlan",
    "LoraLayerParams",
    "LoraParams",
    "Matrix",
    "PeftModuleSet",
    "SKIP",
    "SampleBatch",
    "TensorContainer",
    "adapter_forward",
    "align_layer",
    "alignment_report",
    "apply_alignment",
    "brute_force_lsa",
    "column_stats",
    "lora_delta",
    "matmul",
    "pearson_correlation",
    "plan_layers",
    "read_container",
    "realize_plan",
    "solve_lsa",
    "transfer",
    "write_container",
]

__version__ = "0.1.0"
