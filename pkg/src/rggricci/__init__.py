"""Ollivier curvature of random geometric graphs on constant-curvature surfaces."""

__version__ = "0.1.0"

from .curvature import (
    CurvatureSample,
    IsolatedProbeError,
    RicciTarget,
    forman,
    ollivier_classic,
    ollivier_mesoscopic,
    ricci_target,
)
from .geometry import DomainError, Surface, SurfaceKind, bolza_group, distance, in_octagon, probe_pair
from .graph import (
    GeoGraph,
    RegimeReport,
    ScalingSchedule,
    WeightScheme,
    build_rgg,
    check_regime,
    expected_degree,
    read_edge_list,
    write_edge_list,
)
from .harness import ExperimentConfig, SweepRow, run_sweep, summarize
from .paths import UnreachableError, ball, distance_matrix, shortest_path, stretch_stats
from .sampling import SampleMode, SamplerConfig, sample_points
from .transport import TransportProblem, TransportSolution, TransportStatus, certify, solve_emd

__all__ = [
    "CurvatureSample", "IsolatedProbeError", "RicciTarget", "forman", "ollivier_classic",
    "ollivier_mesoscopic", "ricci_target", "DomainError", "Surface", "SurfaceKind", "bolza_group",
    "distance", "in_octagon", "probe_pair", "GeoGraph", "RegimeReport", "ScalingSchedule",
    "WeightScheme", "build_rgg", "check_regime", "expected_degree", "read_edge_list",
    "write_edge_list", "ExperimentConfig", "SweepRow", "run_sweep", "summarize",
    "UnreachableError", "ball", "distance_matrix", "shortest_path", "stretch_stats",
    "SampleMode", "SamplerConfig", "sample_points", "TransportProblem", "TransportSolution",
    "TransportStatus", "certify", "solve_emd",
]
