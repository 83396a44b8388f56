"""First-segment acquisition strategies for late-arriving clients.

A client that misses the current segment-1 slot can always fall back to
waiting for the next slot (at most one segment duration away). Each
scheme here tries to do better by sourcing the missed opening of the
video from somewhere nearby: a neighbor's buffer, a two-hop relay, the
forwarder's RAM pool, or a proxy server picked by the load balancer.

Strategies are pure: they inspect a :class:`WorldView` and return an
:class:`AcquisitionOutcome` without touching any state. The engine is
responsible for applying the outcome (marking uploads, queueing,
recording balancer requests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from . import balancer as _balancer
from .sb_scheduler import BroadcastPlan, next_first_segment_start


class SchemeId(Enum):
    NO_CACHE = "no-cache"
    ALL_CACHE = "all-cache"
    RANDOM_CACHE = "random-cache"
    DSC_CACHE = "dsc-cache"
    POR_CACHE = "por-cache"
    PROXY_CACHE = "proxy-cache"


#: Accepted spellings on the command line and in experiment specs.
SCHEME_ALIASES: dict[str, SchemeId] = {}
for _s in SchemeId:
    SCHEME_ALIASES[_s.value] = _s
    SCHEME_ALIASES[_s.value.replace("-cache", "")] = _s
    SCHEME_ALIASES[_s.value.replace("-", "")] = _s
SCHEME_ALIASES["no"] = SchemeId.NO_CACHE
SCHEME_ALIASES["none"] = SchemeId.NO_CACHE


def normalize_scheme(name: str) -> SchemeId:
    try:
        return SCHEME_ALIASES[name.strip().lower()]
    except KeyError:
        valid = ", ".join(sorted(s.value for s in SchemeId))
        raise ValueError(f"unknown scheme {name!r}; valid schemes: {valid}") from None


class SourceKind(Enum):
    CHANNEL_SLOT = "channel_slot"
    NEIGHBOR = "neighbor"
    RELAY = "relay"
    POR = "por"
    LPS = "lps"


class UnknownVideoError(ValueError):
    pass


# Fraction of viewers that retain the first segment under the sparse
# distributed-cache scheme. Keeping only a thin, dominating-set-like
# subset of holders is what separates it from caching at everyone: the
# two-hop relay claws back most of the lost coverage but not all of it.
DSC_CACHE_PROB = 0.35

# Probe hops burned before giving up and falling back to the next slot.
# Direct-search schemes spend one round; the relay scheme also probes a
# forwarding neighbor.
_FAIL_PROBE_HOPS = {
    SchemeId.NO_CACHE: 0,
    SchemeId.ALL_CACHE: 1,
    SchemeId.RANDOM_CACHE: 1,
    SchemeId.DSC_CACHE: 2,
    SchemeId.POR_CACHE: 1,
    SchemeId.PROXY_CACHE: 1,
}


@dataclass(frozen=True)
class AcquisitionOutcome:
    """What one late client ends up doing for its first segment.

    ``startup_delay_ms`` counts from the arrival instant to the first
    playable data. A failed attempt always falls back to the broadcast
    slot, so ``failed`` implies ``source_kind == CHANNEL_SLOT`` and the
    delay includes both the slot wait and the probe hops that were spent
    discovering there was nothing better.
    """

    source_kind: SourceKind
    startup_delay_ms: int
    failed: bool = False
    holder_id: int | None = None
    via_id: int | None = None
    lps_id: int | None = None
    slot_wait_ms: int = 0
    queue_wait_ms: int = 0
    fetch_ms: int = 0

    def __post_init__(self):
        if self.startup_delay_ms < 0:
            raise ValueError("startup_delay_ms must be non-negative")
        if self.failed and self.source_kind is not SourceKind.CHANNEL_SLOT:
            raise ValueError("a failed acquisition must fall back to the channel slot")
        if self.source_kind is SourceKind.CHANNEL_SLOT and (
            self.holder_id is not None or self.via_id is not None or self.lps_id is not None
        ):
            raise ValueError("channel-slot outcomes carry no source ids")


class NeighborIndex:
    """Uniform-grid spatial index over present clients.

    Cell size equals the radio range, so every client within range of a
    query point sits in one of the nine cells around it. Lookups return
    candidate ids; exact range filtering is the caller's job.
    """

    def __init__(self, cell_m: float):
        if cell_m <= 0:
            raise ValueError("cell size must be positive")
        self.cell_m = float(cell_m)
        self._cells: dict[tuple[int, int], list[int]] = {}

    def _key(self, pos: tuple[float, float]) -> tuple[int, int]:
        return (int(math.floor(pos[0] / self.cell_m)), int(math.floor(pos[1] / self.cell_m)))

    def add(self, cid: int, pos: tuple[float, float]) -> None:
        self._cells.setdefault(self._key(pos), []).append(cid)

    def remove(self, cid: int, pos: tuple[float, float]) -> None:
        key = self._key(pos)
        cell = self._cells.get(key)
        if cell is None or cid not in cell:
            raise KeyError(f"client {cid} not present in cell {key}")
        cell.remove(cid)
        if not cell:
            del self._cells[key]

    def ids_near(self, pos: tuple[float, float]):
        """All ids in the 3x3 cell block around ``pos`` (superset of in-range)."""
        cx, cy = self._key(pos)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                cell = self._cells.get((cx + dx, cy + dy))
                if cell:
                    yield from cell


@dataclass(frozen=True)
class WorldView:
    """Read-only snapshot of everything a strategy may look at.

    The engine hands one of these to :func:`acquire_first_segment` at each
    decision instant; nothing in it is mutated during the call, so equal
    views produce equal outcomes.
    """

    now_ms: int
    msg_latency_ms: int
    client_range_m: float
    consumption_rate_mbps: float
    bandwidth_mbps: float
    random_cache_prob: float
    clients: Mapping[int, object]
    index: NeighborIndex
    plans: Mapping[int, BroadcastPlan]
    lps_table: _balancer.LpsTable | None = None
    lps_pools: Mapping[int, object] | None = None
    por_pool: object | None = None

    def present_snapshot(self) -> tuple:
        """Canonical tuple of present clients, for comparisons in tests."""
        rows = []
        for cid in sorted(self.clients):
            c = self.clients[cid]
            rows.append(
                (cid, c.position, c.video_id, bool(c.holder), bool(c.uploading))
            )
        return tuple(rows)


def fetch_duration_ms(world: WorldView, missed_ms: int) -> int:
    """Time to pull the missed opening of segment 1 over the access link.

    The source streams ``missed_ms`` worth of content (at the consumption
    rate) flat out at the link bandwidth, so the transfer runs much faster
    than real time and the serving slot frees up quickly.
    """
    if missed_ms <= 0:
        return 0
    ratio = world.consumption_rate_mbps / world.bandwidth_mbps
    return int(math.ceil(missed_ms * ratio))


def _dist2(a: tuple[float, float], b: tuple[float, float]) -> float:
    return (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2


def _candidates_in_range(world: WorldView, pos: tuple[float, float], skip_id: int):
    """(dist2, id, record) for every present client within radio range."""
    r2 = world.client_range_m**2
    out = []
    for cid in world.index.ids_near(pos):
        if cid == skip_id:
            continue
        rec = world.clients.get(cid)
        if rec is None:
            continue
        d2 = _dist2(pos, rec.position)
        if d2 <= r2:
            out.append((d2, cid, rec))
    out.sort(key=lambda t: (t[0], t[1]))
    return out


def _nearest_free_holder(world: WorldView, pos, video_id: int, skip_id: int):
    for d2, cid, rec in _candidates_in_range(world, pos, skip_id):
        if rec.holder and rec.video_id == video_id and not rec.uploading:
            return cid
    return None


def _find_relay(world: WorldView, client, video_id: int):
    """First (via, holder) pair reachable in two hops, nearest-first."""
    for _d2, zid, zrec in _candidates_in_range(world, client.position, client.id):
        holder = _nearest_free_holder(world, zrec.position, video_id, zid)
        if holder is not None and holder != client.id:
            return zid, holder
    return None


def _slot_outcome(scheme: SchemeId, wait_ms: int, latency: int, failed: bool) -> AcquisitionOutcome:
    hops = _FAIL_PROBE_HOPS[scheme] if failed else 0
    return AcquisitionOutcome(
        source_kind=SourceKind.CHANNEL_SLOT,
        startup_delay_ms=wait_ms + hops * latency,
        failed=failed,
        slot_wait_ms=wait_ms,
    )


def acquire_first_segment(
    scheme: SchemeId, client, video_id: int, world: WorldView
) -> AcquisitionOutcome:
    """Decide how a late client obtains the opening of segment 1.

    The client missed the current segment-1 slot by some margin; every
    scheme may fall back to the next slot (``wait_ms`` away), and the
    queue-backed schemes refuse a queue that would outlast that slot,
    which is what makes their acquisition failures impossible while spare
    capacity exists.
    """
    plan = world.plans.get(video_id)
    if plan is None:
        raise UnknownVideoError(f"no broadcast plan for video {video_id}")
    _channel, wait_ms = next_first_segment_start(plan, world.now_ms)
    if wait_ms == 0:
        raise ValueError("acquire_first_segment is only for late clients")
    latency = world.msg_latency_ms
    missed_ms = (world.now_ms - plan.epoch_ms) % plan.segment_duration_ms
    fetch_ms = fetch_duration_ms(world, missed_ms)

    if scheme is SchemeId.NO_CACHE:
        return _slot_outcome(scheme, wait_ms, latency, failed=False)

    if scheme in (SchemeId.ALL_CACHE, SchemeId.RANDOM_CACHE, SchemeId.DSC_CACHE):
        holder = _nearest_free_holder(world, client.position, video_id, client.id)
        if holder is not None:
            return AcquisitionOutcome(
                source_kind=SourceKind.NEIGHBOR,
                startup_delay_ms=2 * latency,
                holder_id=holder,
                slot_wait_ms=wait_ms,
                fetch_ms=fetch_ms,
            )
        if scheme is SchemeId.DSC_CACHE:
            relay = _find_relay(world, client, video_id)
            if relay is not None:
                via, holder = relay
                return AcquisitionOutcome(
                    source_kind=SourceKind.RELAY,
                    startup_delay_ms=3 * latency,
                    holder_id=holder,
                    via_id=via,
                    slot_wait_ms=wait_ms,
                    fetch_ms=fetch_ms,
                )
        return _slot_outcome(scheme, wait_ms, latency, failed=True)

    if scheme is SchemeId.POR_CACHE:
        if world.por_pool is None:
            raise ValueError("por-cache requires a forwarder pool in the world view")
        queue_wait = world.por_pool.projected_wait(world.now_ms)
        if queue_wait > wait_ms:
            return _slot_outcome(scheme, wait_ms, latency, failed=True)
        return AcquisitionOutcome(
            source_kind=SourceKind.POR,
            startup_delay_ms=2 * latency + queue_wait,
            slot_wait_ms=wait_ms,
            queue_wait_ms=queue_wait,
            fetch_ms=fetch_ms,
        )

    if scheme is SchemeId.PROXY_CACHE:
        if world.lps_table is None or not world.lps_pools:
            raise ValueError("proxy-cache requires an LPS table in the world view")
        lps_id = _balancer.assign_lps(world.lps_table)
        queue_wait = world.lps_pools[lps_id].projected_wait(world.now_ms)
        if queue_wait > wait_ms:
            return _slot_outcome(scheme, wait_ms, latency, failed=True)
        return AcquisitionOutcome(
            source_kind=SourceKind.LPS,
            startup_delay_ms=3 * latency + queue_wait,
            lps_id=lps_id,
            slot_wait_ms=wait_ms,
            queue_wait_ms=queue_wait,
            fetch_ms=fetch_ms,
        )

    raise ValueError(f"unhandled scheme {scheme!r}")


def on_playback_started(scheme: SchemeId, client, video_id: int, world: WorldView, rng) -> bool:
    """Whether this client keeps segment 1 available for others.

    Called exactly once per client at the instant playback begins. The
    probabilistic schemes consume one draw from ``rng``; the others leave
    the stream untouched.
    """
    if scheme is SchemeId.ALL_CACHE:
        return True
    if scheme is SchemeId.RANDOM_CACHE:
        return bool(rng.random() < world.random_cache_prob)
    if scheme is SchemeId.DSC_CACHE:
        return bool(rng.random() < DSC_CACHE_PROB)
    return False
