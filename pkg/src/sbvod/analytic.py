"""Analytic capacity model: cache placement, hit ratio, and blocking.

The model answers, without running the simulator, how many dedicated
unicast streams a given downlink can carry once the most popular first
segments are cached at the proxies, and optionally once a slice of the
link is reserved to keep broadcasting a few uncached videos.

Weights throughout are ``video.popularity * quality.request_prob``, the
probability that an arriving request asks for exactly that (video,
quality) item.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .domain import VideoSpec

# Guard for float floor artifacts when converting bandwidth ratios to
# whole stream slots.
_FLOOR_EPS = 1e-9


@dataclass
class PlacementMap:
    """Which items are cached at the proxies and which stay on broadcast.

    Keys are ``(video_id, q_index)`` pairs. ``lps_channels`` records how
    many proxy channels replay each broadcast-selected item; it is set by
    :func:`select_broadcast_videos` and defaults to 1.
    """

    cached: dict[tuple[int, int], bool] = field(default_factory=dict)
    broadcast: dict[tuple[int, int], bool] = field(default_factory=dict)
    lps_channels: int = 1

    def is_cached(self, video_id: int, q_index: int) -> bool:
        return self.cached.get((video_id, q_index), False)

    def is_broadcast(self, video_id: int, q_index: int) -> bool:
        return self.broadcast.get((video_id, q_index), False)


@dataclass(frozen=True)
class CapacityReport:
    """Outputs of one capacity analysis, all rates in bits per second."""

    hit_ratio: float
    lambda_dedicated: float
    avg_stream_rate: float
    supported_streams: int
    blocking_prob: float
    overall_blocking: float
    broadcast_bandwidth: float
    lambda_broadcast: float
    avg_broadcast_rate: float
    dedicated_capacity: int
    mean_service_minutes: float


def weighted_items(videos: list[VideoSpec] | tuple[VideoSpec, ...]):
    """Yield (video, quality, weight) over the whole catalog."""
    for v in videos:
        for q in v.qualities:
            yield v, q, v.popularity * q.request_prob


def erlang_b(offered_load: float, servers: int) -> float:
    """Blocking probability of an N-server loss system at the given load.

    Uses the standard stable recurrence
    ``B(0) = 1;  B(n) = a B(n-1) / (n + a B(n-1))``
    which avoids the factorials of the textbook closed form. With zero
    servers everything blocks, so ``B == 1`` for any positive load.
    """
    if offered_load < 0:
        raise ValueError("offered_load must be non-negative")
    if servers < 0:
        raise ValueError("servers must be non-negative")
    b = 1.0
    for n in range(1, servers + 1):
        b = offered_load * b / (n + offered_load * b)
    return b


def place_cache(
    videos: list[VideoSpec] | tuple[VideoSpec, ...],
    cache_capacity_bits: float,
) -> PlacementMap:
    """Greedy first-segment placement by request weight under a byte budget.

    Items are visited in descending weight (ties broken by video id then
    quality index, ascending) and each one that still fits is cached; an
    item that does not fit is skipped and the scan continues, so a small
    popular item can still land after a large one was passed over.
    """
    if cache_capacity_bits < 0:
        raise ValueError("cache_capacity_bits must be non-negative")
    order = sorted(
        weighted_items(videos),
        key=lambda t: (-t[2], t[0].id, t[1].q_index),
    )
    placement = PlacementMap()
    remaining = float(cache_capacity_bits)
    for v, q, _w in order:
        placement.cached[(v.id, q.q_index)] = False
        placement.broadcast[(v.id, q.q_index)] = False
        if q.size_bits <= remaining:
            placement.cached[(v.id, q.q_index)] = True
            remaining -= q.size_bits
    return placement


def hit_ratio(videos, placement: PlacementMap) -> float:
    """Probability that an arriving request finds its first segment cached."""
    return sum(w for v, q, w in weighted_items(videos) if placement.is_cached(v.id, q.q_index))


def dedicated_stream_analysis(
    videos,
    placement: PlacementMap,
    lambda_per_sec: float,
    bandwidth_bits: float,
    mean_service_minutes: float,
) -> CapacityReport:
    """Capacity of the dedicated downlink once cache hits are peeled off.

    The surviving request rate is ``lambda * (1 - hit_ratio)``; those
    requests ask for a non-cached item, so the average stream they open is
    the weight-normalised rate over non-cached items. The downlink then
    holds ``floor(bandwidth / avg_rate)`` concurrent streams and blocking
    follows the loss formula at load ``lambda_miss * service_time``.

    When everything is cached no dedicated stream is ever opened; the
    report degenerates to zeros by convention.
    """
    if lambda_per_sec < 0:
        raise ValueError("lambda_per_sec must be non-negative")
    if bandwidth_bits <= 0:
        raise ValueError("bandwidth_bits must be positive")
    if mean_service_minutes <= 0:
        raise ValueError("mean_service_minutes must be positive")

    hit = hit_ratio(videos, placement)
    lam_ded = lambda_per_sec * (1.0 - hit)
    miss_weight_rate = sum(
        w * q.stream_rate_bps
        for v, q, w in weighted_items(videos)
        if not placement.is_cached(v.id, q.q_index)
    )
    if lam_ded <= 0.0 or miss_weight_rate <= 0.0:
        return CapacityReport(
            hit_ratio=hit,
            lambda_dedicated=0.0,
            avg_stream_rate=0.0,
            supported_streams=0,
            blocking_prob=0.0,
            overall_blocking=0.0,
            broadcast_bandwidth=0.0,
            lambda_broadcast=0.0,
            avg_broadcast_rate=0.0,
            dedicated_capacity=0,
            mean_service_minutes=mean_service_minutes,
        )

    # lambda/lambda_miss times the weighted miss rate, i.e. the mean rate
    # of the streams that actually reach the dedicated link.
    avg_rate = (lambda_per_sec / lam_ded) * miss_weight_rate
    n_streams = int(math.floor(bandwidth_bits / avg_rate + _FLOOR_EPS))
    load = lam_ded * mean_service_minutes * 60.0
    p_block = erlang_b(load, n_streams)
    overall = lam_ded * p_block / lambda_per_sec if lambda_per_sec > 0 else 0.0
    # Without a broadcast reservation the broadcast-era stream is just the
    # dedicated stream, so mirror those fields across.
    return CapacityReport(
        hit_ratio=hit,
        lambda_dedicated=lam_ded,
        avg_stream_rate=avg_rate,
        supported_streams=n_streams,
        blocking_prob=p_block,
        overall_blocking=overall,
        broadcast_bandwidth=0.0,
        lambda_broadcast=lam_ded,
        avg_broadcast_rate=avg_rate,
        dedicated_capacity=n_streams,
        mean_service_minutes=mean_service_minutes,
    )


def broadcast_reserved_bits(videos, placement: PlacementMap) -> float:
    """Bandwidth consumed by replaying the broadcast-selected items."""
    return sum(
        q.stream_rate_bps * placement.lps_channels
        for v, q, _w in weighted_items(videos)
        if (not placement.is_cached(v.id, q.q_index))
        and placement.is_broadcast(v.id, q.q_index)
    )


def select_broadcast_videos(
    videos,
    placement: PlacementMap,
    reserved_broadcast_bits: float,
    lps_channels: int,
) -> PlacementMap:
    """Pick non-cached items to keep broadcasting inside a reserved budget.

    Mirrors the cache placement loop: walk non-cached items by descending
    weight and flag each one whose replay cost (rate x lps_channels) still
    fits; items that do not fit are skipped and the scan continues.
    """
    if reserved_broadcast_bits < 0:
        raise ValueError("reserved_broadcast_bits must be non-negative")
    if lps_channels < 1:
        raise ValueError("lps_channels must be at least 1")
    out = PlacementMap(
        cached=dict(placement.cached),
        broadcast={k: False for k in placement.cached},
        lps_channels=lps_channels,
    )
    order = sorted(
        (t for t in weighted_items(videos) if not out.is_cached(t[0].id, t[1].q_index)),
        key=lambda t: (-t[2], t[0].id, t[1].q_index),
    )
    spent = 0.0
    for v, q, _w in order:
        cost = q.stream_rate_bps * lps_channels
        if spent + cost <= reserved_broadcast_bits + 1e-6:
            out.broadcast[(v.id, q.q_index)] = True
            spent += cost
    return out


def broadcast_analysis(
    videos,
    placement: PlacementMap,
    lambda_per_sec: float,
    bandwidth_bits: float,
    mean_service_minutes: float,
) -> CapacityReport:
    """Full report when part of the link keeps broadcasting selected items.

    Requests for cached items are absorbed by the proxies and requests for
    broadcast-flagged items ride the reserved slice, so only the remainder
    opens dedicated streams on what is left of the link.
    """
    base = dedicated_stream_analysis(
        videos, placement, lambda_per_sec, bandwidth_bits, mean_service_minutes
    )
    b_broad = broadcast_reserved_bits(videos, placement)
    if b_broad > bandwidth_bits:
        raise ValueError("broadcast reservation exceeds the link bandwidth")

    served_weight = sum(
        w
        for v, q, w in weighted_items(videos)
        if placement.is_cached(v.id, q.q_index)
        or placement.is_broadcast(v.id, q.q_index)
    )
    lam_broad = lambda_per_sec * (1.0 - served_weight)
    rest_weight_rate = sum(
        w * q.stream_rate_bps
        for v, q, w in weighted_items(videos)
        if not placement.is_cached(v.id, q.q_index)
        and not placement.is_broadcast(v.id, q.q_index)
    )
    if lam_broad <= 0.0 or rest_weight_rate <= 0.0:
        return CapacityReport(
            hit_ratio=base.hit_ratio,
            lambda_dedicated=base.lambda_dedicated,
            avg_stream_rate=base.avg_stream_rate,
            supported_streams=base.supported_streams,
            blocking_prob=0.0,
            overall_blocking=0.0,
            broadcast_bandwidth=b_broad,
            lambda_broadcast=0.0,
            avg_broadcast_rate=0.0,
            dedicated_capacity=0,
            mean_service_minutes=mean_service_minutes,
        )

    avg_rate = (lambda_per_sec / lam_broad) * rest_weight_rate
    n_streams = int(math.floor((bandwidth_bits - b_broad) / avg_rate + _FLOOR_EPS))
    load = lam_broad * mean_service_minutes * 60.0
    p_block = erlang_b(load, n_streams)
    overall = lam_broad * p_block / lambda_per_sec if lambda_per_sec > 0 else 0.0
    return CapacityReport(
        hit_ratio=base.hit_ratio,
        lambda_dedicated=base.lambda_dedicated,
        avg_stream_rate=base.avg_stream_rate,
        supported_streams=base.supported_streams,
        blocking_prob=p_block,
        overall_blocking=overall,
        broadcast_bandwidth=b_broad,
        lambda_broadcast=lam_broad,
        avg_broadcast_rate=avg_rate,
        dedicated_capacity=n_streams,
        mean_service_minutes=mean_service_minutes,
    )
