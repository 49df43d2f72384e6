"""Abelian sandpile dynamics on Vicsek fractal graphs.

Exact and Monte Carlo analysis of chip-firing on the self-similar Vicsek
graphs: graph construction and structural queries, stabilization with full
avalanche accounting, recurrence and uniform sampling through the burning
bijection, the nested-volume particle chain with its exact absorption
analysis and avalanche-radius distribution, the critical group via Smith
normal forms, and the recursively merged group identity.
"""

from .fractal_graph import (
    CapacityError,
    Coord,
    DiagonalClass,
    VicsekGraph,
    branch_component,
    build,
    classify,
    diagonal_vertices,
    geodesic_subgraph,
    geodesic_to_sink,
    graph_distance,
    has_ternary_digit_two,
    kappa,
    level_cap,
)
from .sandpile import (
    AvalancheReport,
    SandpileConfig,
    add_particles,
    boundary_flow,
    group_add,
    is_stable,
    stabilize,
    topple,
    untopple,
)
from .recurrence import (
    EdgeOrder,
    SpanningTree,
    assemble_diagonal,
    enumerate_recurrent_k4,
    is_recurrent,
    sample_ivl_diagonal,
    sample_recurrent,
    tree_to_config,
    wilson_ust,
)
from .chain import (
    ChainEvent,
    MonteCarloEstimate,
    TransitionMatrix,
    absorption_probabilities,
    k4_transition_table,
    k_step_closed_form,
    k_step_distribution,
    monte_carlo_stabilization,
    path_probability,
    radius_pmf,
    radius_pmf_table,
    stabilization_probability,
    transient_mass,
    transition_matrix,
)
from .critical_group import (
    InvariantFactors,
    SingularMatrixError,
    element_order,
    group_structure,
    order2_count,
    reduced_laplacian,
    sink_hit_probability,
    smith_normal_form,
)
from .identity import (
    IdentityReport,
    MergeSpec,
    VerificationError,
    identity,
    merge,
    verify_identity,
)

__version__ = "0.1.0"

__all__ = [
    "AvalancheReport",
    "CapacityError",
    "ChainEvent",
    "Coord",
    "DiagonalClass",
    "EdgeOrder",
    "IdentityReport",
    "InvariantFactors",
    "MergeSpec",
    "MonteCarloEstimate",
    "SandpileConfig",
    "SingularMatrixError",
    "SpanningTree",
    "TransitionMatrix",
    "VerificationError",
    "VicsekGraph",
    "absorption_probabilities",
    "add_particles",
    "assemble_diagonal",
    "boundary_flow",
    "branch_component",
    "build",
    "classify",
    "diagonal_vertices",
    "element_order",
    "enumerate_recurrent_k4",
    "geodesic_subgraph",
    "geodesic_to_sink",
    "graph_distance",
    "group_add",
    "group_structure",
    "has_ternary_digit_two",
    "identity",
    "is_recurrent",
    "is_stable",
    "k4_transition_table",
    "k_step_closed_form",
    "k_step_distribution",
    "kappa",
    "level_cap",
    "merge",
    "monte_carlo_stabilization",
    "order2_count",
    "path_probability",
    "radius_pmf",
    "radius_pmf_table",
    "reduced_laplacian",
    "sample_ivl_diagonal",
    "sample_recurrent",
    "sink_hit_probability",
    "smith_normal_form",
    "stabilization_probability",
    "stabilize",
    "topple",
    "transient_mass",
    "transition_matrix",
    "tree_to_config",
    "untopple",
    "verify_identity",
    "wilson_ust",
]
