"""EM + belief propagation community detection on labeled stochastic blockmodels."""

from .bp import BPConfig, EstimatedAffinities, MessageState, bp_sweep, edge_correlators, init_messages, run_bp
from .em import EMConfig, EmTrajectory, m_step, run_em, transient_attraction_rate
from .graph import GraphError, LabeledGraph, build_graph, read_edge_list, write_edge_list
from .phase import (
    PhaseVerdict,
    em_threshold,
    infeasibility_region,
    known_param_threshold,
    overlap,
    phase_verdict,
)
from .sampler import EnsembleParams, PlantedInstance, derive_affinities, sample_instance
from .spectral import (
    NbOperator,
    SpectralSummary,
    band_radius,
    build_nb_operator,
    empirical_spectrum,
    iso_eigenvalue,
    j_matrix,
)

__version__ = "0.1.0"
