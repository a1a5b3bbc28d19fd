"""archprint: black-box model-architecture fingerprinting at desk scale.

A two-stage extraction attack against prediction APIs -- shortlist
architectures whose profiled inference-time window contains the target's
measured latency, then identify the survivor by matching a handful of
discriminative probe responses against per-architecture templates -- plus
the simulated MLaaS environment that makes the whole pipeline reproducible
without any real models.
"""

from .attack import (
    AttackTranscript,
    ProbeRanking,
    Shortlist,
    aggregate_target_timing,
    majority_vote,
    match_response,
    rank_probes,
    run_attack,
    select_probes,
    shortlist_architectures,
)
from .client import InProcessSession, MeasuredResponse, RemoteSession
from .core import (
    LabelSpace,
    ModelId,
    TopNResponse,
    elementwise_mean,
    euclidean_distance,
    expand_topn,
)
from .errors import FingerprintError
from .estimators import NearestTemplateClassifier, TimingShortlister
from .evaluation import (
    CampaignConfig,
    CampaignReport,
    emit_report,
    load_report,
    run_campaign,
)
from .profiler import (
    ArchitectureTemplate,
    ResponseCube,
    TimingProfile,
    build_templates,
    collect_cube,
    dom_report,
    export_responses_csv,
    ingest_responses_csv,
    load_templates,
    load_timing_profile,
    profile_timing,
    save_templates,
    save_timing_profile,
)
from .service import PredictionService
from .zoo import (
    OracleModel,
    ZooConfig,
    default_timing_layout,
    generate_zoo,
    group_by_architecture,
    load_zoo,
    query_oracle,
    sample_latency,
    save_zoo,
)

__version__ = "0.1.0"

__all__ = [
    "AttackTranscript",
    "ArchitectureTemplate",
    "CampaignConfig",
    "CampaignReport",
    "FingerprintError",
    "InProcessSession",
    "LabelSpace",
    "MeasuredResponse",
    "ModelId",
    "NearestTemplateClassifier",
    "OracleModel",
    "PredictionService",
    "ProbeRanking",
    "RemoteSession",
    "ResponseCube",
    "Shortlist",
    "TimingProfile",
    "TimingShortlister",
    "TopNResponse",
    "ZooConfig",
    "aggregate_target_timing",
    "build_templates",
    "collect_cube",
    "default_timing_layout",
    "dom_report",
    "elementwise_mean",
    "emit_report",
    "euclidean_distance",
    "expand_topn",
    "export_responses_csv",
    "generate_zoo",
    "group_by_architecture",
    "ingest_responses_csv",
    "load_report",
    "load_templates",
    "load_timing_profile",
    "load_zoo",
    "majority_vote",
    "match_response",
    "profile_timing",
    "query_oracle",
    "rank_probes",
    "run_attack",
    "run_campaign",
    "sample_latency",
    "save_templates",
    "save_timing_profile",
    "save_zoo",
    "select_probes",
    "shortlist_architectures",
]
