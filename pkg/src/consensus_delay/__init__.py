"""Delay margins, topology-independent stability bounds and switching-topology
simulation for two second-order consensus protocols with communication delay."""

from .graph import (
    ProtocolKind,
    Spectrum,
    Topology,
    absolute_exigent_eigenvalue,
    anderson_bound,
    is_connected,
    laplacian,
    parse_topology,
    predicted_exigent_eigenvalue,
    read_topology,
    spectrum,
    weighted_adjacency,
)
from .stability import (
    DelayMargin,
    FactorCrossing,
    ProtocolParams,
    absolute_margin,
    boundary_surface,
    crossing_delay,
    crossing_frequencies,
    factor_char_value,
    factor_margin,
    oracle_margin,
    sylvester_resultant_det,
    topology_margin,
    write_surface_csv,
)
from .dynamics import (
    SimConfig,
    SwitchingSchedule,
    Trace,
    build_system,
    random_initial_state,
    read_config,
    simulate,
    simulate_ensemble,
    topology_at,
    write_trace_csv,
)
from .analysis import Verdict, centroid, detect_outcome, disagreement, write_analysis_csv

__version__ = "0.1.0"
