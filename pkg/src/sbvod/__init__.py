"""Staggered-broadcast VOD: event-driven simulator and analytic capacity model."""

from .analytic import (
    CapacityReport,
    PlacementMap,
    broadcast_analysis,
    dedicated_stream_analysis,
    erlang_b,
    hit_ratio,
    place_cache,
    select_broadcast_videos,
)
from .balancer import LpsEntry, LpsTable, assign_lps, record_request, release_request
from .caching import AcquisitionOutcome, SchemeId, SourceKind, normalize_scheme
from .domain import (
    ConfigError,
    QualityLevel,
    RandomSource,
    SimConfig,
    VideoSpec,
    catalog_from_config,
    derive_seed,
    load_config,
    validate_config,
)
from .engine import MetricsReport, Simulation, SimulationError, run_simulation
from .sb_scheduler import (
    BroadcastPlan,
    build_plan,
    current_segment,
    max_channels,
    next_first_segment_start,
    segment_duration_ms,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionOutcome",
    "BroadcastPlan",
    "CapacityReport",
    "ConfigError",
    "LpsEntry",
    "LpsTable",
    "MetricsReport",
    "PlacementMap",
    "QualityLevel",
    "RandomSource",
    "SchemeId",
    "SimConfig",
    "Simulation",
    "SimulationError",
    "SourceKind",
    "VideoSpec",
    "assign_lps",
    "broadcast_analysis",
    "build_plan",
    "catalog_from_config",
    "current_segment",
    "dedicated_stream_analysis",
    "derive_seed",
    "erlang_b",
    "hit_ratio",
    "load_config",
    "max_channels",
    "next_first_segment_start",
    "normalize_scheme",
    "place_cache",
    "record_request",
    "release_request",
    "run_simulation",
    "segment_duration_ms",
    "select_broadcast_videos",
    "validate_config",
    "__version__",
]
