"""Consensus weight design by Schatten norm (trace) minimisation.

The link weights of an average-consensus protocol are chosen by projected
gradient descent on Tr(W^p); the gradient of each link only needs the weights
within p/2 hops, so the optimisation runs as a local message protocol.
"""

from .consensus import ErrorTrace, consensus_step, run_consensus, run_jco
from .graph import (
    Graph,
    GraphError,
    Subgraph,
    diameter,
    edge_subgraph,
    generate_er,
    generate_rgg,
    is_connected,
    k_hop_subgraph,
    load_edge_list,
    read_edge_list,
)
from .oracle import fdla_oracle_small, solve_fdla
from .protocol import ProtocolFault, distributed_optimize, distributed_round
from .robustness import (
    RepairParams,
    build_convergent,
    detect_misbehaving,
    parallel_consensus_guard,
    project_node_row,
)
from .schatten import (
    OptimizerState,
    StepSchedule,
    gradient,
    local_gradient,
    local_gradient_from_subgraph,
    project_box,
    tm_optimize,
)
from .spectral import SpectralReport, check_convergent, mu, spectral_report, trace_power
from .weights import (
    local_degree_weights,
    matrix_to_weights,
    max_degree_weights,
    optimal_constant_weights,
    weights_to_matrix,
)

__version__ = "0.1.0"
