"""Shared value types, configuration handling, and the seeded random source.

Time is kept as integer milliseconds throughout the package. Config fields
that are expressed in minutes are converted exactly once, at the point where
a component starts working with them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields as _dc_fields
from pathlib import Path

import numpy as np

MS_PER_MINUTE = 60_000
BITS_PER_MEGABIT = 1_000_000

# Tolerance when checking that request probabilities sum to one.
_PROB_TOL = 1e-9


class ConfigError(ValueError):
    """Unreadable config file, unknown key, or a value of the wrong type."""


@dataclass(frozen=True)
class QualityLevel:
    """One encoding of a video: its rate, stored size, and request share.

    ``request_prob`` is the probability that a viewer of the parent video
    asks for this particular quality; across one video they sum to 1.
    """

    q_index: int
    stream_rate_bps: float
    size_bits: float
    request_prob: float

    def __post_init__(self):
        if self.q_index < 1:
            raise ValueError("q_index is 1-based and must be >= 1")
        if self.stream_rate_bps <= 0:
            raise ValueError("stream_rate_bps must be positive")
        if self.size_bits <= 0:
            raise ValueError("size_bits must be positive")
        if not 0.0 <= self.request_prob <= 1.0:
            raise ValueError("request_prob must lie in [0, 1]")


@dataclass(frozen=True)
class VideoSpec:
    """A video in the service catalog with its quality ladder."""

    id: int
    length_minutes: int
    consumption_rate_mbps: float
    popularity: float
    qualities: tuple[QualityLevel, ...]

    def __post_init__(self):
        if self.length_minutes <= 0:
            raise ValueError("length_minutes must be positive")
        if self.consumption_rate_mbps <= 0:
            raise ValueError("consumption_rate_mbps must be positive")
        if not 0.0 <= self.popularity <= 1.0:
            raise ValueError("popularity must lie in [0, 1]")
        if not self.qualities:
            raise ValueError("a video needs at least one quality level")
        seen = set()
        for q in self.qualities:
            if q.q_index in seen:
                raise ValueError(f"duplicate q_index {q.q_index}")
            seen.add(q.q_index)
        total = sum(q.request_prob for q in self.qualities)
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(
                f"quality request probabilities must sum to 1 (got {total!r})"
            )

    @property
    def length_ms(self) -> int:
        return self.length_minutes * MS_PER_MINUTE


@dataclass(frozen=True)
class SimConfig:
    """Every tunable of a simulation or analysis run, with usable defaults.

    Geometry fields describe a circular service area of radius
    ``lf_radius_m`` with clients dropped uniformly inside it;
    ``client_range_m`` is the client-to-client radio reach.
    """

    bandwidth_mbps: float = 54.0
    channels: int = 5
    video_length_minutes: int = 60
    consumption_rate_mbps: float = 1.5
    arrival_rate_per_min: float = 6.0
    num_videos: int = 1
    num_lps: int = 2
    lps_capacity: int = 20
    lf_radius_m: float = 150.0
    client_range_m: float = 25.0
    msg_latency_ms: int = 20
    random_cache_prob: float = 0.5
    seed: int = 1
    horizon_minutes: float = 300.0
    warmup_minutes: float = 30.0

    @property
    def horizon_ms(self) -> int:
        return int(round(self.horizon_minutes * MS_PER_MINUTE))

    @property
    def warmup_ms(self) -> int:
        return int(round(self.warmup_minutes * MS_PER_MINUTE))


def validate_config(cfg: SimConfig) -> list[str]:
    """Return a list of violation messages; an empty list means the config is sound.

    Anything accepted here must run cleanly downstream, so this also covers
    the segment-divisibility rule and the channel bandwidth budget
    (consumption rate x channels x videos must fit inside the link).
    """
    out: list[str] = []
    if cfg.bandwidth_mbps <= 0:
        out.append("bandwidth_mbps must be positive")
    if cfg.channels < 1:
        out.append("channels must be at least 1")
    if cfg.video_length_minutes <= 0:
        out.append("video_length_minutes must be positive")
    if cfg.consumption_rate_mbps <= 0:
        out.append("consumption_rate_mbps must be positive")
    if cfg.arrival_rate_per_min <= 0:
        out.append("arrival_rate_per_min must be positive")
    if cfg.num_videos < 1:
        out.append("num_videos must be at least 1")
    if cfg.num_lps < 1:
        out.append("num_lps must be at least 1")
    if cfg.lps_capacity < 1:
        out.append("lps_capacity must be at least 1")
    if cfg.lf_radius_m <= 0:
        out.append("lf_radius_m must be positive")
    if cfg.client_range_m <= 0:
        out.append("client_range_m must be positive")
    if cfg.msg_latency_ms < 0:
        out.append("msg_latency_ms must be non-negative")
    if not 0.0 <= cfg.random_cache_prob <= 1.0:
        out.append("random_cache_prob must lie in [0, 1]")
    if cfg.horizon_minutes <= 0:
        out.append("horizon_minutes must be positive")
    if cfg.warmup_minutes < 0:
        out.append("warmup_minutes must be non-negative")
    elif cfg.warmup_minutes > cfg.horizon_minutes:
        out.append("warmup_minutes must not exceed horizon_minutes")

    if cfg.bandwidth_mbps > 0 and cfg.channels >= 1 and cfg.num_videos >= 1:
        needed = cfg.consumption_rate_mbps * cfg.channels * cfg.num_videos
        if needed > cfg.bandwidth_mbps + 1e-9:
            out.append(
                "channel budget infeasible: consumption_rate_mbps * channels"
                f" * num_videos = {needed:g} exceeds bandwidth_mbps ="
                f" {cfg.bandwidth_mbps:g}"
            )
    if cfg.video_length_minutes > 0 and cfg.channels >= 1:
        if (cfg.video_length_minutes * MS_PER_MINUTE) % cfg.channels != 0:
            out.append(
                f"video_length_minutes = {cfg.video_length_minutes} does not"
                f" split into {cfg.channels} equal segments"
            )
    return out


def load_config(path: str | Path) -> SimConfig:
    """Parse a flat ``key = value`` UTF-8 file into a SimConfig.

    Lines starting with ``#`` (and trailing ``#`` comments) are ignored.
    Unknown keys raise ConfigError rather than being silently dropped.
    """
    field_types = {f.name: f.type for f in _dc_fields(SimConfig)}
    values: dict[str, object] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in field_types:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        ftype = field_types[key]
        try:
            if ftype == "int" or ftype is int:
                values[key] = int(val)
            else:
                values[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return SimConfig(**values)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Seeded randomness
# ---------------------------------------------------------------------------

#: Name of the bit generator behind every stream this package draws from.
GENERATOR_NAME = "PCG64"


def derive_seed(base_seed: int, *labels: object) -> int:
    """Mix a base seed and a label path into a stable 64-bit child seed.

    The mix is blake2b over ``"<seed>/<label>/<label>/..."`` truncated to
    64 bits, so the same inputs give the same child seed on every platform
    and in every process.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(base_seed)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest(), "big")


class RandomSource:
    """Deterministic random source with independent labelled sub-streams.

    Each ``substream(*labels)`` call returns a fresh PCG64 generator seeded
    from :func:`derive_seed`, so components can draw without perturbing one
    another and replications can be given disjoint streams.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def substream(self, *labels: object) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(derive_seed(self.seed, *labels)))

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, generator={GENERATOR_NAME})"


def catalog_from_config(cfg: SimConfig) -> tuple[VideoSpec, ...]:
    """Build the default video catalog for a config.

    Popularity follows a 1/rank curve normalised over ``num_videos``, the
    usual shape for VOD request skew. Each video carries a single quality
    at the consumption rate.
    """
    n = cfg.num_videos
    harmonic = sum(1.0 / k for k in range(1, n + 1))
    rate_bps = cfg.consumption_rate_mbps * BITS_PER_MEGABIT
    size_bits = cfg.video_length_minutes * 60 * rate_bps
    videos = []
    for k in range(1, n + 1):
        videos.append(
            VideoSpec(
                id=k,
                length_minutes=cfg.video_length_minutes,
                consumption_rate_mbps=cfg.consumption_rate_mbps,
                popularity=(1.0 / k) / harmonic,
                qualities=(
                    QualityLevel(
                        q_index=1,
                        stream_rate_bps=rate_bps,
                        size_bits=size_bits,
                        request_prob=1.0,
                    ),
                ),
            )
        )
    return tuple(videos)
