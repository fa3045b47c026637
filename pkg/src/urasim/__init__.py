"""Slotted unsourced random access over angular-domain MIMO channels.

The toolkit covers the full uncoupled pipeline: parametric scatterer
channels on a planar array, common-codebook encoding, joint activity
detection and channel estimation by message passing with a grid support
prior, slot-balanced clustering for message stitching, and a seeded
Monte-Carlo harness with oracle suites validating every closed form.
"""

from .channel import (
    Scatterer,
    UpaGeometry,
    UserChannel,
    angular_transform_matrix,
    generate_scatterers,
    peak_support_predicate,
    steering_vector,
    synthesize_user_channel,
)
from .clustering import (
    ClusterState,
    Partition,
    SlotChannels,
    assignment_step,
    centroid_update,
    hungarian_solve,
    run_clustering,
    stitch_messages,
)
from .codec import (
    MessageSet,
    SlotCodebook,
    SlotObservation,
    build_codebook,
    complexify,
    fragment_message,
    realify,
    synthesize_slot,
)
from .gamp import (
    DenoiserMoments,
    DetectionResult,
    GampConfig,
    GampState,
    compute_varpi,
    denoise_laplacian,
    em_update_lambda,
    em_update_sigma2,
    hard_decision,
    run_estimator,
)
from .metrics import TrialRecord, error_rates, nmse, pupe_analytic
from .mrf import MrfState, message_init, mrf_pass
from .pipeline import SimConfig, run_sweep, run_trial

__version__ = "0.1.0"

__all__ = [
    "Scatterer",
    "UpaGeometry",
    "UserChannel",
    "angular_transform_matrix",
    "generate_scatterers",
    "peak_support_predicate",
    "steering_vector",
    "synthesize_user_channel",
    "ClusterState",
    "Partition",
    "SlotChannels",
    "assignment_step",
    "centroid_update",
    "hungarian_solve",
    "run_clustering",
    "stitch_messages",
    "MessageSet",
    "SlotCodebook",
    "SlotObservation",
    "build_codebook",
    "complexify",
    "fragment_message",
    "realify",
    "synthesize_slot",
    "DenoiserMoments",
    "DetectionResult",
    "GampConfig",
    "GampState",
    "compute_varpi",
    "denoise_laplacian",
    "em_update_lambda",
    "em_update_sigma2",
    "hard_decision",
    "run_estimator",
    "TrialRecord",
    "error_rates",
    "nmse",
    "pupe_analytic",
    "MrfState",
    "message_init",
    "mrf_pass",
    "SimConfig",
    "run_sweep",
    "run_trial",
]
