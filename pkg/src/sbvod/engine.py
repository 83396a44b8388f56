"""Discrete-event simulation of one service area under one caching scheme.

Clients arrive as a Poisson stream, drop uniformly into the circular
service area, pick a video by popularity, and either join the segment-1
slot that is starting right now or run the configured acquisition scheme
for the opening they missed. Startup delay is measured from the arrival
instant to the first playable data; a client then plays the whole video
and departs.

Events are processed strictly in (time, sequence) order off a single
heap and every random draw comes from a labelled sub-stream of the run
seed, so a run is a pure function of (config, scheme).
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TextIO

from . import balancer, caching
from .caching import (
    AcquisitionOutcome,
    NeighborIndex,
    SchemeId,
    SourceKind,
    WorldView,
)
from .domain import (
    MS_PER_MINUTE,
    RandomSource,
    SimConfig,
    VideoSpec,
    catalog_from_config,
    validate_config,
)
from .sb_scheduler import BroadcastPlan, BeforeStartError, build_plan


class SimulationError(RuntimeError):
    """The run cannot continue; carries a human-readable diagnostic."""


class ClientState(Enum):
    REQUESTING = "requesting"
    AWAITING_SLOT = "awaiting_slot"
    FETCHING_FIRST = "fetching_first"
    PLAYING = "playing"
    DONE = "done"


class EventKind(Enum):
    ARRIVAL = "arrival"
    SLOT_START = "slot_start"
    FETCH_COMPLETE = "fetch_complete"
    QUEUE_GRANT = "queue_grant"
    PLAYBACK_END = "playback_end"
    DEPARTURE = "departure"


@dataclass
class Event:
    time_ms: int
    seq: int
    kind: EventKind
    client_id: int = -1

    def __lt__(self, other: "Event") -> bool:
        return (self.time_ms, self.seq) < (other.time_ms, other.seq)


@dataclass
class ClientRecord:
    """Mutable per-client state while the client is in the system."""

    id: int
    arrival_ms: int
    position: tuple[float, float]
    video_id: int
    state: ClientState = ClientState.REQUESTING
    assigned_channel: int | None = None
    missed_ms: int = 0
    startup_delay_ms: int | None = None
    playback_start_ms: int | None = None
    initial_buffer_fill_bits: float = 0.0
    prefetch_buffer_fill_bits: float = 0.0
    holder: bool = False
    uploading: bool = False
    fetch_kind: SourceKind | None = None
    fetch_holder_id: int | None = None
    fetch_via_id: int | None = None
    fetch_lps_id: int | None = None
    fetch_hold_ms: int = 0


@dataclass(frozen=True)
class ArrivalClass:
    """Whether an arrival coincides with a segment-1 slot, and on which channel."""

    on_time: bool
    channel: int
    missed_ms: int


@dataclass(frozen=True)
class MetricsReport:
    """Post-warmup summary of one simulation run."""

    scheme: str
    seed: int
    arrivals: int
    mean_startup_delay_ms: float | None
    failure_probability: float | None
    attempts: int
    failures: int
    outcome_counts: dict[str, int]
    lps_requests: dict[int, int]
    empty: bool


class StreamPool:
    """Fixed number of concurrent first-segment streams plus a FIFO queue.

    Busy slots are tracked as absolute end times; queued jobs remember how
    long they will hold a slot once granted. Because every hold length is
    known at enqueue time, the wait a new arrival would face is computed
    exactly, and the grant instants the projection promises are the ones
    the event loop later delivers.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._busy: list[int] = []
        self._pending: deque[tuple[int, int]] = deque()

    def _prune(self, now_ms: int) -> None:
        while self._busy and self._busy[0] <= now_ms:
            heapq.heappop(self._busy)

    def projected_wait(self, now_ms: int) -> int:
        """Wait until a slot would be granted to a job arriving right now."""
        self._prune(now_ms)
        if not self._pending and len(self._busy) < self.capacity:
            return 0
        avail = [now_ms] * (self.capacity - len(self._busy)) + list(self._busy)
        heapq.heapify(avail)
        for _cid, hold in self._pending:
            start = heapq.heappop(avail)
            heapq.heappush(avail, start + hold)
        return max(0, heapq.heappop(avail) - now_ms)

    def admit(self, now_ms: int, end_ms: int) -> None:
        self._prune(now_ms)
        if len(self._busy) >= self.capacity:
            raise SimulationError("stream pool admitted past capacity")
        heapq.heappush(self._busy, end_ms)

    def enqueue(self, client_id: int, hold_ms: int) -> None:
        self._pending.append((client_id, hold_ms))

    def pop_pending(self) -> tuple[int, int]:
        return self._pending.popleft()

    @property
    def in_service(self) -> int:
        return len(self._busy)


class Simulation:
    """One run: fixed config, fixed scheme, labelled random sub-streams."""

    def __init__(self, cfg: SimConfig, scheme: SchemeId, trace: TextIO | None = None):
        problems = validate_config(cfg)
        if problems:
            raise SimulationError("invalid config: " + "; ".join(problems))
        self.cfg = cfg
        self.scheme = scheme
        self.trace = trace

        self.videos: dict[int, VideoSpec] = {v.id: v for v in catalog_from_config(cfg)}
        self.plans: dict[int, BroadcastPlan] = {
            vid: build_plan(v, cfg.channels, epoch_ms=0) for vid, v in self.videos.items()
        }
        self._video_cdf = self._build_video_cdf()

        source = RandomSource(cfg.seed)
        self._rng_arrivals = source.substream("arrivals")
        self._rng_place = source.substream("placement")
        self._rng_video = source.substream("video-choice")
        self._rng_cache = source.substream("cache-retention")

        self.now = 0
        self._seq = 0
        self._heap: list[Event] = []
        self.clients: dict[int, ClientRecord] = {}
        self.index = NeighborIndex(cfg.client_range_m)
        self._next_client_id = 1

        self.lps_table = balancer.LpsTable(
            [
                balancer.LpsEntry(i, f"LPS{i}", f"10.0.0.{i}:8554")
                for i in range(1, cfg.num_lps + 1)
            ]
        )
        self.lps_pools = {i: StreamPool(cfg.lps_capacity) for i in range(1, cfg.num_lps + 1)}
        self.por_pool = StreamPool(cfg.lps_capacity)

        self.horizon_ms = cfg.horizon_ms
        self.warmup_ms = cfg.warmup_ms
        self.arrived = 0
        self.departed = 0

        # Post-warmup accumulators.
        self._n_counted = 0
        self._delay_sum = 0
        self._attempts = 0
        self._failures = 0
        self._outcomes = {k.value: 0 for k in SourceKind}
        self._lps_grants = {i: 0 for i in self.lps_pools}

    # -- setup helpers ----------------------------------------------------

    def _build_video_cdf(self) -> list[tuple[float, int]]:
        total = sum(v.popularity for v in self.videos.values())
        acc = 0.0
        cdf = []
        for vid, v in self.videos.items():
            acc += v.popularity / total
            cdf.append((acc, vid))
        cdf[-1] = (1.0, cdf[-1][1])
        return cdf

    def _draw_video(self) -> int:
        u = self._rng_video.random()
        for edge, vid in self._video_cdf:
            if u <= edge:
                return vid
        return self._video_cdf[-1][1]

    def _draw_position(self) -> tuple[float, float]:
        r = self.cfg.lf_radius_m * math.sqrt(self._rng_place.random())
        theta = 2.0 * math.pi * self._rng_place.random()
        return (r * math.cos(theta), r * math.sin(theta))

    def _schedule(self, time_ms: int, kind: EventKind, client_id: int = -1) -> None:
        self._seq += 1
        heapq.heappush(self._heap, Event(time_ms, self._seq, kind, client_id))

    def _trace(self, kind: EventKind, client_id: int, detail: str = "") -> None:
        if self.trace is not None:
            self.trace.write(f"{self.now} {kind.value} client={client_id} {detail}\n".rstrip() + "\n")

    # -- world view -------------------------------------------------------

    def world_view(self) -> WorldView:
        return WorldView(
            now_ms=self.now,
            msg_latency_ms=self.cfg.msg_latency_ms,
            client_range_m=self.cfg.client_range_m,
            consumption_rate_mbps=self.cfg.consumption_rate_mbps,
            bandwidth_mbps=self.cfg.bandwidth_mbps,
            random_cache_prob=self.cfg.random_cache_prob,
            clients=self.clients,
            index=self.index,
            plans=self.plans,
            lps_table=self.lps_table,
            lps_pools=self.lps_pools,
            por_pool=self.por_pool,
        )

    # -- main loop --------------------------------------------------------

    def run(self) -> MetricsReport:
        self._schedule_next_arrival(from_ms=0)
        while self.step():
            pass
        if self.arrived != self.departed or self.clients:
            raise SimulationError("drain left clients in flight")
        return self._build_report()

    def step(self) -> bool:
        """Process one event; returns False once the heap is empty."""
        if not self._heap:
            return False
        ev = heapq.heappop(self._heap)
        if ev.time_ms < self.now:
            raise SimulationError("event time went backwards")
        self.now = ev.time_ms
        if ev.kind is EventKind.ARRIVAL:
            self._on_arrival(ev)
        elif ev.kind is EventKind.SLOT_START:
            self._on_slot_start(ev)
        elif ev.kind is EventKind.FETCH_COMPLETE:
            self._on_fetch_complete(ev)
        elif ev.kind is EventKind.QUEUE_GRANT:
            self._on_queue_grant(ev)
        elif ev.kind is EventKind.PLAYBACK_END:
            self._on_playback_end(ev)
        elif ev.kind is EventKind.DEPARTURE:
            self._on_departure(ev)
        else:
            raise SimulationError(f"unhandled event kind {ev.kind}")
        return True

    # -- event handlers ---------------------------------------------------

    def _schedule_next_arrival(self, from_ms: int) -> None:
        scale = MS_PER_MINUTE / self.cfg.arrival_rate_per_min
        gap = int(round(self._rng_arrivals.exponential(scale)))
        t = from_ms + max(0, gap)
        if t <= self.horizon_ms:
            self._schedule(t, EventKind.ARRIVAL)

    def _on_arrival(self, ev: Event) -> None:
        self._schedule_next_arrival(from_ms=self.now)
        cid = self._next_client_id
        self._next_client_id += 1
        video_id = self._draw_video()
        c = ClientRecord(
            id=cid,
            arrival_ms=self.now,
            position=self._draw_position(),
            video_id=video_id,
        )
        self.clients[cid] = c
        self.index.add(cid, c.position)
        self.arrived += 1

        cls = classify_arrival(self.plans[video_id], self.now)
        c.assigned_channel = cls.channel
        c.missed_ms = cls.missed_ms
        self._trace(EventKind.ARRIVAL, cid, f"video={video_id} missed={cls.missed_ms}")

        if cls.on_time:
            # Walked in exactly as a segment-1 slot opened: no acquisition.
            c.startup_delay_ms = 0
            c.playback_start_ms = self.now
            self._fill_buffers(c, missed_ms=0)
            self._count_arrival(c, SourceKind.CHANNEL_SLOT, failed=False, attempt=False, delay_ms=0)
            self._begin_playback(c)
            return

        outcome = caching.acquire_first_segment(self.scheme, c, video_id, self.world_view())
        self._apply_outcome(c, outcome)

    def _apply_outcome(self, c: ClientRecord, out: AcquisitionOutcome) -> None:
        attempt = self.scheme is not SchemeId.NO_CACHE
        self._count_arrival(
            c,
            out.source_kind,
            failed=out.failed,
            attempt=attempt,
            delay_ms=out.startup_delay_ms,
        )
        c.startup_delay_ms = out.startup_delay_ms

        if out.source_kind is SourceKind.CHANNEL_SLOT:
            c.state = ClientState.AWAITING_SLOT
            c.playback_start_ms = self.now + out.slot_wait_ms
            self._schedule(c.playback_start_ms, EventKind.SLOT_START, c.id)
            return

        c.state = ClientState.FETCHING_FIRST
        c.playback_start_ms = self.now + out.startup_delay_ms
        fetch_end = c.playback_start_ms + out.fetch_ms
        c.fetch_kind = out.source_kind

        if out.source_kind in (SourceKind.NEIGHBOR, SourceKind.RELAY):
            holder = self.clients[out.holder_id]
            if holder.uploading:
                raise SimulationError(f"holder {holder.id} granted a second upload")
            holder.uploading = True
            c.fetch_holder_id = out.holder_id
            c.fetch_via_id = out.via_id
            self._schedule(fetch_end, EventKind.FETCH_COMPLETE, c.id)
            return

        # Pool-backed fetches hold their slot from grant to transfer end.
        hold = (out.startup_delay_ms - out.queue_wait_ms) + out.fetch_ms
        c.fetch_hold_ms = hold
        c.fetch_lps_id = out.lps_id
        pool = self.por_pool if out.source_kind is SourceKind.POR else self.lps_pools[out.lps_id]
        if out.queue_wait_ms == 0:
            self._grant_stream(c, pool)
        else:
            pool.enqueue(c.id, hold)
            self._schedule(self.now + out.queue_wait_ms, EventKind.QUEUE_GRANT, c.id)

    def _grant_stream(self, c: ClientRecord, pool: StreamPool) -> None:
        end = self.now + c.fetch_hold_ms
        pool.admit(self.now, end)
        if c.fetch_kind is SourceKind.LPS:
            balancer.record_request(self.lps_table, c.fetch_lps_id, f"C{c.id}")
            if c.arrival_ms > self.warmup_ms:
                self._lps_grants[c.fetch_lps_id] += 1
        self._schedule(end, EventKind.FETCH_COMPLETE, c.id)

    def _on_slot_start(self, ev: Event) -> None:
        c = self.clients[ev.client_id]
        if c.state is not ClientState.AWAITING_SLOT:
            raise SimulationError(f"client {c.id} hit a slot in state {c.state}")
        self._fill_buffers(c, missed_ms=0)
        self._trace(EventKind.SLOT_START, c.id)
        self._begin_playback(c)

    def _on_queue_grant(self, ev: Event) -> None:
        c = self.clients[ev.client_id]
        pool = self.por_pool if c.fetch_kind is SourceKind.POR else self.lps_pools[c.fetch_lps_id]
        head_id, _hold = pool.pop_pending()
        if head_id != c.id:
            raise SimulationError("queue grant out of FIFO order")
        self._trace(EventKind.QUEUE_GRANT, c.id)
        self._grant_stream(c, pool)

    def _on_fetch_complete(self, ev: Event) -> None:
        c = self.clients[ev.client_id]
        if c.fetch_kind in (SourceKind.NEIGHBOR, SourceKind.RELAY):
            holder = self.clients.get(c.fetch_holder_id)
            if holder is not None:
                if not holder.uploading:
                    raise SimulationError(f"holder {holder.id} upload flag lost mid-transfer")
                holder.uploading = False
        elif c.fetch_kind is SourceKind.LPS:
            balancer.release_request(self.lps_table, c.fetch_lps_id, f"C{c.id}")
        self._fill_buffers(c, missed_ms=c.missed_ms)
        self._trace(EventKind.FETCH_COMPLETE, c.id)
        self._begin_playback(c)

    def _begin_playback(self, c: ClientRecord) -> None:
        c.state = ClientState.PLAYING
        if caching.on_playback_started(self.scheme, c, c.video_id, self.world_view(), self._rng_cache):
            c.holder = True
        video = self.videos[c.video_id]
        self._schedule(c.playback_start_ms + video.length_ms, EventKind.PLAYBACK_END, c.id)

    def _on_playback_end(self, ev: Event) -> None:
        self._trace(EventKind.PLAYBACK_END, ev.client_id)
        self._schedule(self.now, EventKind.DEPARTURE, ev.client_id)

    def _on_departure(self, ev: Event) -> None:
        c = self.clients[ev.client_id]
        c.state = ClientState.DONE
        c.holder = False
        self.index.remove(c.id, c.position)
        del self.clients[c.id]
        self.departed += 1
        self._trace(EventKind.DEPARTURE, c.id)
        if self.arrived != self.departed + len(self.clients):
            raise SimulationError("client conservation violated")

    # -- metrics ----------------------------------------------------------

    def _fill_buffers(self, c: ClientRecord, missed_ms: int) -> None:
        # The opening fetched from a cache source lands in the initial
        # buffer; whatever the joined channel still broadcasts of segment 1
        # lands in the prefetch buffer. A slot join takes the whole segment
        # over the initial buffer.
        video = self.videos[c.video_id]
        plan = self.plans[c.video_id]
        bits_per_ms = video.consumption_rate_mbps * 1000.0
        seg_bits = plan.segment_duration_ms * bits_per_ms
        if missed_ms <= 0:
            c.initial_buffer_fill_bits = seg_bits
            c.prefetch_buffer_fill_bits = 0.0
        else:
            c.initial_buffer_fill_bits = missed_ms * bits_per_ms
            c.prefetch_buffer_fill_bits = seg_bits - missed_ms * bits_per_ms

    def _count_arrival(
        self, c: ClientRecord, source: SourceKind, failed: bool, attempt: bool, delay_ms: int
    ) -> None:
        if c.arrival_ms <= self.warmup_ms:
            return
        self._n_counted += 1
        self._delay_sum += delay_ms
        self._outcomes[source.value] += 1
        if attempt:
            self._attempts += 1
            if failed:
                self._failures += 1

    def _build_report(self) -> MetricsReport:
        n = self._n_counted
        mean = (self._delay_sum / n) if n else None
        if n == 0:
            failure = None
        elif self._attempts == 0:
            failure = 0.0
        else:
            failure = self._failures / self._attempts
        return MetricsReport(
            scheme=self.scheme.value,
            seed=self.cfg.seed,
            arrivals=n,
            mean_startup_delay_ms=mean,
            failure_probability=failure,
            attempts=self._attempts,
            failures=self._failures,
            outcome_counts=dict(self._outcomes),
            lps_requests=dict(self._lps_grants),
            empty=(n == 0),
        )


def classify_arrival(plan: BroadcastPlan, t_ms: int) -> ArrivalClass:
    """Split an arrival into on-time (a slot starts now) or late by ``missed_ms``.

    The returned channel is the one whose segment-1 slot the client can
    use: the slot starting at this very instant when on time, otherwise
    the channel currently part-way through segment 1.
    """
    if t_ms < plan.epoch_ms:
        raise BeforeStartError(f"arrival at {t_ms} precedes epoch {plan.epoch_ms}")
    since = t_ms - plan.epoch_ms
    missed = since % plan.segment_duration_ms
    channel = ((since // plan.segment_duration_ms) % plan.channels) + 1
    return ArrivalClass(on_time=(missed == 0), channel=channel, missed_ms=missed)


def snapshot_world(sim: Simulation) -> WorldView:
    """Read-only view of the simulation at its current instant."""
    return sim.world_view()


def run_simulation(cfg: SimConfig, scheme: SchemeId, trace: TextIO | None = None) -> MetricsReport:
    """Run one full simulation and return its post-warmup metrics."""
    return Simulation(cfg, scheme, trace=trace).run()
