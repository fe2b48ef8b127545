"""Half-precision sparse kernels with a deterministic SIMT cost model.

Binary16 packed arithmetic, edge- and vertex-parallel SpMM/SDDMM with
schedule-faithful reduction order, overflow-safe discretized scaling, and
mixed-precision GNN training (GCN, GIN, GAT) on a minimal tape.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .halfnum import (
    HALF_EPS,
    HALF_MAX,
    HALF_MIN_NORMAL,
    HALF_MIN_SUBNORMAL,
    Half2,
    Half4,
    Half8,
    from_bits,
    half_add,
    half_bits,
    half_div,
    half_fma,
    half_mul,
    half_sub,
    mirror_edge_feature,
    to_half,
    to_wide,
)
from .sparse import (
    CooGraph,
    CsrGraph,
    DenseTensor,
    add_self_loops,
    col_degrees,
    coo_to_csr,
    csr_to_coo,
    load_edge_list,
    load_tensor,
    pad_features,
    save_tensor,
    symmetrize,
    synth_sbm,
    transpose,
)
from .simt import (
    KernelMetrics,
    Schedule,
    SubWarpLayout,
    check_spmm_rules,
    feature_transactions,
    intra_cta_rounds,
    plan_edge_parallel,
    plan_vertex_grouped,
    sddmm_reduction_rounds,
    subwarp_layout,
    warp_load_bytes,
)
from .kernels import (
    Reduction,
    StagingBuffer,
    scalar_reference,
    sddmm,
    spmm_v,
    spmm_ve,
    spmm_vertex_grouped,
)
from .models import (
    Adam,
    ConversionCounter,
    GraphBundle,
    Model,
    NanLossError,
    OverflowCounters,
    Tensor,
    TrainConfig,
    TrainResult,
    accuracy,
    cross_entropy,
    edge_softmax,
    shadow_div,
    shadow_exp,
    train,
)

__all__ = [
    "HALF_EPS",
    "HALF_MAX",
    "HALF_MIN_NORMAL",
    "HALF_MIN_SUBNORMAL",
    "Half2",
    "Half4",
    "Half8",
    "from_bits",
    "half_add",
    "half_bits",
    "half_div",
    "half_fma",
    "half_mul",
    "half_sub",
    "mirror_edge_feature",
    "to_half",
    "to_wide",
    "CooGraph",
    "CsrGraph",
    "DenseTensor",
    "add_self_loops",
    "col_degrees",
    "coo_to_csr",
    "csr_to_coo",
    "load_edge_list",
    "load_tensor",
    "pad_features",
    "save_tensor",
    "symmetrize",
    "synth_sbm",
    "transpose",
    "KernelMetrics",
    "Schedule",
    "SubWarpLayout",
    "check_spmm_rules",
    "feature_transactions",
    "intra_cta_rounds",
    "plan_edge_parallel",
    "plan_vertex_grouped",
    "sddmm_reduction_rounds",
    "subwarp_layout",
    "warp_load_bytes",
    "Reduction",
    "StagingBuffer",
    "scalar_reference",
    "sddmm",
    "spmm_v",
    "spmm_ve",
    "spmm_vertex_grouped",
    "Adam",
    "ConversionCounter",
    "GraphBundle",
    "Model",
    "NanLossError",
    "OverflowCounters",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "accuracy",
    "cross_entropy",
    "edge_softmax",
    "shadow_div",
    "shadow_exp",
    "train",
]
