"""Latency, throughput, deflection and saturation statistics for one simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

SATURATION_WINDOWS = 3


def percentile(samples, p):
    """Nearest-rank percentile; None for an empty sample set."""
    if not 0 < p <= 100:
        raise ValueError(f"Percentile must be in (0, 100], got {p}.")
    if not samples:
        return None
    ordered = sorted(samples)
    rank = math.ceil(Fraction(str(p)) * len(ordered) / 100)
    return ordered[max(rank, 1) - 1]


def _mean(values):
    return sum(values) / len(values) if values else None


@dataclass
class MetricsStore:
    warmup_cycles: int = 0
    flit_latencies: list = field(default_factory=list)
    network_latencies: list = field(default_factory=list)
    packet_latencies: list = field(default_factory=list)
    consumed_cycles: list = field(default_factory=list)
    consumed_sources: list = field(default_factory=list)
    queue_samples: list = field(default_factory=list)
    consumed: int = 0
    dropped: int = 0
    delivered_packets: int = 0
    retransmits: int = 0
    measured_flits: int = 0
    deflected_flits: int = 0
    deflections: int = 0
    hops: int = 0
    retries_total: int = 0
    retries_max: int = 0

    def measures(self, flit):
        return flit.enqueue_cycle >= self.warmup_cycles

    def record_flit(self, flit, cycle, measured):
        self.consumed += 1
        self.consumed_cycles.append(cycle)
        self.consumed_sources.append(flit.src.flat_index)
        if not measured:
            return
        self.measured_flits += 1
        self.flit_latencies.append(cycle - flit.enqueue_cycle)
        self.network_latencies.append(cycle - flit.inject_cycle)
        self.deflections += flit.deflections
        self.hops += flit.hops
        if flit.deflections:
            self.deflected_flits += 1
        self.retries_total += flit.ring_retries
        self.retries_max = max(self.retries_max, flit.ring_retries)

    def record_drop(self):
        self.dropped += 1

    def record_packet(self, enqueue_cycle, cycle):
        self.delivered_packets += 1
        if enqueue_cycle >= self.warmup_cycles:
            self.packet_latencies.append(cycle - enqueue_cycle)

    def sample_queues(self, cycle, queued):
        self.queue_samples.append((cycle, queued))


def ring_throughput(store, members, window):
    """Delivered flits sourced by ``members`` per node per cycle over ``[start, end)``."""
    start, end = window
    if end <= start or not members:
        return 0.0
    sources = set(members)
    delivered = sum(
        1 for cycle, src in zip(store.consumed_cycles, store.consumed_sources)
        if start <= cycle < end and src in sources
    )
    return delivered / (len(members) * (end - start))


def queue_window_means(store, start, windows=SATURATION_WINDOWS + 1):
    samples = [q for cycle, q in store.queue_samples if cycle >= start]
    if len(samples) < windows:
        return []
    size = len(samples) // windows
    return [_mean(samples[i * size:(i + 1) * size]) for i in range(windows)]


def is_saturated(store, sat_threshold, nodes, packet_flits, avg_latency=None):
    if avg_latency is None:
        avg_latency = _mean(store.flit_latencies)
    if avg_latency is not None and avg_latency > sat_threshold:
        return True
    means = queue_window_means(store, store.warmup_cycles)[-SATURATION_WINDOWS:]
    if len(means) < SATURATION_WINDOWS:
        return False
    growing = all(a < b for a, b in zip(means, means[1:]))
    return growing and means[-1] / nodes > packet_flits


@dataclass
class Summary:
    avg_latency: float | None
    p95_latency: int | None
    max_latency: int | None
    avg_net_latency: float | None
    p95_net_latency: int | None
    max_net_latency: int | None
    avg_packet_latency: float | None
    throughput: float
    ring_throughputs: dict
    deflections: int
    deflections_per_flit: float
    deflections_per_hop: float
    deflected_fraction: float
    retries_avg: float
    retries_max: int
    fifo_wait_avg: float | None
    fifo_wait_max: int | None
    head_wait_max: int | None
    saturated: bool
    delivered_flits: int
    delivered_packets: int
    drops: int
    retransmits: int
    undelivered: int = 0


def summary(store, network, clock, sat_threshold=300, packet_flits=4, throughput_window=0):
    stats = network.stats
    end = clock.cycle
    start = clock.warmup_cycles
    if throughput_window:
        start = max(start, end - throughput_window)
    nodes = len(network.nodes)

    live = list(network.in_flight_flits())
    retries = [f.ring_retries for f in live if store.measures(f)]
    # Flits still circling count toward the maximum whenever they were enqueued.
    retries_max = max([store.retries_max, *(f.ring_retries for f in live)])
    retries_count = store.measured_flits + len(retries)
    head_waits = stats.head_waits + network.pending_head_waits(end)

    avg_latency = _mean(store.flit_latencies)
    flits = store.measured_flits
    return Summary(
        avg_latency=avg_latency,
        p95_latency=percentile(store.flit_latencies, 95),
        max_latency=max(store.flit_latencies, default=None),
        avg_net_latency=_mean(store.network_latencies),
        p95_net_latency=percentile(store.network_latencies, 95),
        max_net_latency=max(store.network_latencies, default=None),
        avg_packet_latency=_mean(store.packet_latencies),
        throughput=ring_throughput(store, range(nodes), (start, end)),
        ring_throughputs={
            label: ring_throughput(store, members, (start, end))
            for label, members in network.groups().items()
        },
        deflections=store.deflections,
        deflections_per_flit=store.deflections / flits if flits else 0.0,
        deflections_per_hop=store.deflections / store.hops if store.hops else 0.0,
        deflected_fraction=store.deflected_flits / flits if flits else 0.0,
        retries_avg=(store.retries_total + sum(retries)) / retries_count if retries_count else 0.0,
        retries_max=retries_max,
        fifo_wait_avg=_mean(stats.fifo_waits),
        fifo_wait_max=max(stats.fifo_waits, default=None),
        head_wait_max=max(head_waits, default=None),
        saturated=is_saturated(store, sat_threshold, nodes, packet_flits, avg_latency),
        delivered_flits=store.consumed,
        delivered_packets=store.delivered_packets,
        drops=store.dropped,
        retransmits=store.retransmits,
    )
