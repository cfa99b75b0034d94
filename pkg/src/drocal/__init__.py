"""Distributionally robust calibration toolkit.

Eligibility sets for epistemic parameters from KS bands on simulated
summaries, then robust bounds and designs over the aleatory weight polytope.
"""
from .aleatory import (
    ReliabilityReport,
    WeightPolytope,
    bound_linear_functional,
    build_polytopes,
    failure_probability_range,
    reliability_report,
    representative_realizations,
    rmin_rmax,
    severity,
)
from .design import KWParams, KWTrace, RobustObjective, design_report, kw_optimize, robust_objective
from .eligibility import (
    BandLP,
    EligibilityRecord,
    EligibilitySet,
    build_lp,
    check_feasible,
    construct_eligibility_set,
    optimize_weights,
    rank_parameters,
    reduce_set,
    solve_q_star,
    subsample_study,
)
from .errors import (
    DomainError,
    DrocalError,
    EmptySetError,
    InfeasibleError,
    ProtocolError,
    SolverError,
    SpecError,
    TransportError,
)
from .external import ExternalSimulator, external_simulate
from .ksstat import KSThreshold, empirical_cdf, kolmogorov_cdf, kolmogorov_quantile, threshold, weighted_ks_distance
from .model import OSC2, Box, Osc2, Trajectory, evaluate_requirements, sample_truth, simulate
from .summary import PeakSpec, SummarySpec, default_spec, summarize, summarize_batch

__version__ = "0.1.0"
