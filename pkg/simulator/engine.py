"""Simulation instance: builds a network from a config and advances it one cycle at a time."""

from __future__ import annotations

import logging
import math

from .core import ConfigError, Flit, PacketId, Rng, SimClock, SimulationError
from .hird import build_hird
from .mesh import build_mesh
from .metrics import MetricsStore, summary
from .reassembly import Outcome, ReassemblyUnit, SenderStore
from .ring import build_single_ring
from .traffic import TrafficGenerator, TrafficSpec

logger = logging.getLogger(__name__)

QUEUE_SAMPLE_INTERVAL = 100
DELIVERY_DEADLINE = 0.8


def build_network(config, rng=None):
    topology = config.topology
    if topology == "single_ring":
        return build_single_ring(config.nodes, lanes=config.lanes, hop_latency=config.hop_latency)
    if topology == "hird":
        return build_hird(
            nodes=config.nodes,
            bridges=config.bridges,
            lane_ratio=config.lane_ratio,
            fifo_up=config.fifo_up,
            fifo_down=config.fifo_down,
            hop_latency=config.hop_latency,
            global_hop_latency=config.global_hop_latency,
            injection_guarantee=config.injection_guarantee,
            transfer_guarantee=config.transfer_guarantee,
            injection_threshold=config.injection_threshold,
            retry_threshold=config.retry_threshold,
            throttle_latency=config.throttle_latency,
        )
    if topology in ("mesh_chipper", "mesh_minbd"):
        side = math.isqrt(config.nodes)
        if side * side != config.nodes:
            raise ConfigError("nodes", f"mesh needs a square node count, got {config.nodes}.")
        return build_mesh(
            side, side,
            mode=topology.removeprefix("mesh_"),
            strict=config.strict_chipper,
            side_buffer=config.side_buffer,
            epoch_length=config.golden_epoch,
            c_threshold=config.c_threshold,
            rng=rng,
        )
    raise ConfigError("topology", f"unknown topology {topology!r}.")


class Simulation:
    def __init__(self, config):
        self.config = config
        master = Rng(config.seed)
        traffic_rng = master.fork()
        network_rng = master.fork()
        self.network = build_network(config, network_rng)
        self.clock = SimClock(0, config.warmup_cycles, config.cycles)
        spec = TrafficSpec(
            pattern=config.pattern,
            rate=config.rate,
            trace_path=config.trace_path,
            packet_flits=config.packet_flits,
        )
        self.traffic = TrafficGenerator(spec, self.network, traffic_rng)
        self.metrics = MetricsStore(warmup_cycles=config.warmup_cycles)
        nodes = len(self.network.nodes)
        self.reassembly = [ReassemblyUnit(config.reassembly_slots) for _ in range(nodes)]
        self.senders = [SenderStore() for _ in range(nodes)]
        self.next_txn = [0] * nodes
        self.control_requests = {}
        self.control_consumed = 0

    def advance(self):
        clock = self.clock
        for request in self.traffic.generate(clock.cycle, self.network):
            self.enqueue_packet(request.src, request.dst, request.num_flits)
        self._step()
        if clock.cycle % QUEUE_SAMPLE_INTERVAL == 0:
            self.metrics.sample_queues(clock.cycle, self.network.total_queued())
        clock.cycle += 1

    def _step(self):
        for flit in self.network.cycle(self.clock):
            self._consume(flit)
        if self.config.check_conservation:
            self.check_conservation()

    def run(self):
        while not self.clock.done:
            self.advance()
        return self.result()

    def drain(self, limit):
        """Stop injection and traffic; cycle until nothing is in flight. Returns cycles taken."""
        self.network.injection_enabled = False
        for elapsed in range(limit + 1):
            if self.network.in_flight() == 0:
                return elapsed
            self._step()
            self.clock.cycle += 1
        raise SimulationError(f"network did not drain within {limit} cycles", cycle=self.clock.cycle)

    def outstanding(self):
        return (
            self.network.in_flight() + self.network.total_queued()
            + sum(len(sender.held) for sender in self.senders) + len(self.control_requests)
        )

    def settle(self, limit):
        """Stop new traffic but keep injecting queued flits until every held packet is delivered."""
        for elapsed in range(limit + 1):
            if not self.outstanding():
                return elapsed
            self._step()
            self.clock.cycle += 1
        raise SimulationError(
            f"{self.outstanding()} flits and packets still outstanding after {limit} cycles",
            cycle=self.clock.cycle,
        )

    def enqueue_packet(self, src, dst, num_flits, control=False):
        nodes = self.network.nodes
        txn = self.next_txn[src]
        self.next_txn[src] += 1
        packet = PacketId(nodes[src], txn)
        if not control:
            self.senders[src].hold(packet, nodes[dst], num_flits, self.clock.cycle)
        for seq in range(num_flits):
            self.network.enqueue(Flit(
                packet=packet, seq=seq, num_flits=num_flits, src=nodes[src], dst=nodes[dst],
                enqueue_cycle=self.clock.cycle, control=control,
            ))
        return packet

    def _consume(self, flit):
        cycle = self.clock.cycle
        if flit.control:
            self.control_consumed += 1
            self._retransmit(self.control_requests.pop(flit.packet))
            return
        receiver = flit.dst.flat_index
        unit = self.reassembly[receiver]
        outcome = unit.receive_flit(flit)
        if outcome is Outcome.DROPPED:
            self.metrics.record_drop()
            return
        self.metrics.record_flit(flit, cycle, self.metrics.measures(flit))
        if outcome is not Outcome.DELIVERED:
            return
        held = self.senders[flit.src.flat_index].confirm(flit.packet)
        if held is not None:
            self.metrics.record_packet(held.enqueue_cycle, cycle)
        while (packet := unit.grant_retransmit()) is not None:
            self._request_retransmit(receiver, packet)

    def _request_retransmit(self, receiver, packet):
        if self.config.retransmit_in_band:
            request = self.enqueue_packet(receiver, packet.src.flat_index, 1, control=True)
            self.control_requests[request] = packet
        else:
            self._retransmit(packet)

    def _retransmit(self, packet):
        flits = self.senders[packet.src.flat_index].retransmit(packet, cycle=self.clock.cycle)
        if flits is None:
            return
        self.metrics.retransmits += 1
        for flit in reversed(flits):
            self.network.enqueue(flit, front=True)

    def check_conservation(self):
        stats = self.network.stats
        in_flight = self.network.in_flight()
        accounted = self.metrics.consumed + self.metrics.dropped + self.control_consumed + in_flight
        if stats.injected != accounted:
            raise SimulationError(
                f"flit conservation violated: injected {stats.injected}, "
                f"consumed {self.metrics.consumed}, dropped {self.metrics.dropped}, "
                f"control {self.control_consumed}, in flight {in_flight}",
                cycle=self.clock.cycle,
            )

    def undelivered(self):
        deadline = int(DELIVERY_DEADLINE * self.clock.total_cycles)
        return sorted(
            (packet.src.flat_index, packet.txn)
            for sender in self.senders
            for packet, held in sender.held.items()
            if self.clock.warmup_cycles <= held.enqueue_cycle < deadline
        )

    def result(self):
        config = self.config
        result = summary(
            self.metrics, self.network, self.clock,
            sat_threshold=config.sat_threshold,
            packet_flits=config.packet_flits,
            throughput_window=config.throughput_window,
        )
        result.undelivered = len(self.undelivered())
        if result.undelivered and not result.saturated:
            logger.warning("%d packets enqueued before cycle %d were never delivered",
                           result.undelivered, int(DELIVERY_DEADLINE * self.clock.total_cycles))
        return result

    def verify(self, result):
        stats = self.network.stats
        if result.max_latency is not None and not (
            result.max_latency >= result.p95_latency and result.max_latency >= result.avg_latency
        ):
            raise SimulationError(
                f"latency ordering broken: max {result.max_latency}, p95 {result.p95_latency}, "
                f"avg {result.avg_latency}",
                cycle=self.clock.cycle,
            )
        if result.p95_latency is not None and result.p95_latency < result.avg_latency:
            logger.warning("p95 latency %s is below the mean %.2f",
                           result.p95_latency, result.avg_latency)
        if stats.golden_deflections:
            raise SimulationError(f"{stats.golden_deflections} golden flits were deflected",
                                  cycle=self.clock.cycle)
        if stats.priority_violations:
            raise SimulationError(f"{stats.priority_violations} top-priority flits missed their port",
                                  cycle=self.clock.cycle)
