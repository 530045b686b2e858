"""Cooperative ARQ and network-coded retransmission over packet-erasure links."""

from .channel import (
    DEFAULT_PROFILE,
    FrameConfig,
    LinkProfile,
    NonTerminatingError,
    ProfileError,
    RandomStream,
    SessionState,
    TruncationPolicy,
    bernoulli_loss,
    validate_profile,
)
from .analytic import (
    InfeasibleError,
    SchemeMoments,
    ThroughputReport,
    cap_for_outage,
    coded_phase_exact,
    expected_b3_anc,
    expected_b3_snc,
    expected_frame,
    expected_frame_arq,
    retransmission_bound,
    scheme_moments,
    size_secondary_load,
    throughput,
)
from .sim import EmpiricalSummary, FrameOutcome, SchemeId, monte_carlo, run_frame, run_session1
from .stats import DomainError, NormalMoments, TruncatedMoments

__version__ = "0.1.0"
