"""Network definitions, the DAG executor and the heatmap losses."""
from .builders import (
    ABLATION_KINDS,
    VNET_BLOCKS,
    build,
    build_ablation,
    build_holistic,
    build_pnet,
    build_vnet,
    count_parameters,
    measure_receptive_field,
    pnet_loss,
    receptive_field,
    vnet_loss,
)
from .model import INIT_STD, Network, NetworkSpec

__all__ = [
    "ABLATION_KINDS", "VNET_BLOCKS", "INIT_STD", "Network", "NetworkSpec", "build", "build_ablation",
    "build_holistic", "build_pnet", "build_vnet", "count_parameters", "measure_receptive_field", "pnet_loss", "receptive_field", "vnet_loss",
]
