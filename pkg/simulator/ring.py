"""Bidirectional bufferless rings, node routers, and the single-ring network."""

from __future__ import annotations

from collections import deque
from enum import IntEnum

from .core import Network, NodeId


class Direction(IntEnum):
    CW = 0
    CCW = 1


def choose_direction(src_stop, dst_stop, ring_size):
    """Shorter way round; an exact tie goes clockwise."""
    cw = (dst_stop - src_stop) % ring_size
    ccw = (src_stop - dst_stop) % ring_size
    return Direction.CW if cw <= ccw else Direction.CCW


def ring_distance(src_stop, dst_stop, ring_size):
    cw = (dst_stop - src_stop) % ring_size
    return min(cw, ring_size - cw)


class RingLane:
    """One flit-wide ring in one direction.

    Registers are stored in a list that never moves; ``offset`` rotates the
    mapping from physical register to list index, so advancing every flit one
    register is a single increment. A list index therefore names a slot that
    travels round the ring, which is what the slot observers track.
    Stop ``i`` owns the router register at physical position ``i * hop_latency``
    (mirrored for counter-clockwise lanes).
    """

    __slots__ = ("direction", "index", "length", "slots", "offset", "_positions")

    def __init__(self, stops, hop_latency, direction, index=0):
        self.direction = direction
        self.index = index
        self.length = stops * hop_latency
        self.slots = [None] * self.length
        self.offset = 0
        if direction == Direction.CW:
            self._positions = [stop * hop_latency for stop in range(stops)]
        else:
            self._positions = [((stops - stop) % stops) * hop_latency for stop in range(stops)]

    def tick(self):
        self.offset = (self.offset + 1) % self.length

    def slot_index(self, stop):
        return (self._positions[stop] - self.offset) % self.length

    def occupancy(self):
        return sum(1 for flit in self.slots if flit is not None)


class Ring:
    def __init__(self, ring_id, size, lanes=1, hop_latency=2):
        if size < 2:
            raise ValueError("A ring needs at least two stops.")
        self.ring_id = ring_id
        self.size = size
        self.hop_latency = hop_latency
        self.lanes = (
            tuple(RingLane(size, hop_latency, Direction.CW, i) for i in range(lanes)),
            tuple(RingLane(size, hop_latency, Direction.CCW, i) for i in range(lanes)),
        )

    @property
    def round_trip(self):
        return self.size * self.hop_latency

    @property
    def lane_count(self):
        return len(self.lanes[0])

    def all_lanes(self):
        return self.lanes[0] + self.lanes[1]

    def tick(self):
        for lane in self.all_lanes():
            lane.tick()

    def flits(self):
        for lane in self.all_lanes():
            for flit in lane.slots:
                if flit is not None:
                    yield flit

    def slot_count(self):
        return sum(lane.length for lane in self.all_lanes())


class NodeRouter:
    """Ring stop: two ejectors, two injection queues (one per direction)."""

    __slots__ = ("node", "index", "ring", "stop", "queues", "starve_counter", "throttled", "ring_prefix")

    def __init__(self, node, ring, stop, ring_prefix=()):
        self.node = node
        self.index = node.flat_index
        self.ring = ring
        self.stop = stop
        self.ring_prefix = ring_prefix
        self.queues = (deque(), deque())
        self.starve_counter = 0
        self.throttled = False

    def queued(self):
        return len(self.queues[0]) + len(self.queues[1])

    def enqueue(self, flit, direction, front=False):
        if front:
            self.queues[direction].appendleft(flit)
        else:
            self.queues[direction].append(flit)

    def cycle(self, clock, stats, injection_enabled=True):
        ejected = []
        wanted = injected = False
        for direction in Direction:
            ejected_here = False
            free_lane = None
            free_slot = 0
            for lane in self.ring.lanes[direction]:
                slot = lane.slot_index(self.stop)
                flit = lane.slots[slot]
                if flit is not None:
                    if flit.dst.flat_index == self.index and not ejected_here:
                        lane.slots[slot] = None
                        ejected.append(flit)
                        ejected_here = True
                        flit = None
                    else:
                        if flit.dst.flat_index == self.index:
                            # Second arrival in one direction: it goes round again.
                            flit.deflections += 1
                        flit.hops += 1
                if flit is None and free_lane is None:
                    free_lane, free_slot = lane, slot
            queue = self.queues[direction]
            if queue and injection_enabled:
                wanted = True
                if free_lane is not None and not self.throttled:
                    flit = queue.popleft()
                    flit.inject_cycle = clock.cycle
                    flit.hops += 1
                    free_lane.slots[free_slot] = flit
                    stats.injected += 1
                    injected = True
        if injected:
            self.starve_counter = 0
        elif wanted and not self.throttled:
            self.starve_counter += 1
        return ejected


class RingNetworkBase(Network):
    def __init__(self, nodes, rings, routers):
        super().__init__(nodes)
        self.rings = rings
        self.routers = routers

    def injection_direction(self, router, flit):
        raise NotImplementedError

    def enqueue(self, flit, front=False):
        router = self.routers[flit.src.flat_index]
        router.enqueue(flit, self.injection_direction(router, flit), front=front)

    def queued_flits(self, node_index):
        return self.routers[node_index].queued()

    def in_flight_flits(self):
        for ring in self.rings:
            yield from ring.flits()

    def total_slots(self):
        return sum(ring.slot_count() for ring in self.rings)


class SingleRingNetwork(RingNetworkBase):
    name = "single_ring"

    def __init__(self, nodes, ring, routers):
        super().__init__(nodes, [ring], routers)
        self.ring = ring

    def injection_direction(self, router, flit):
        return choose_direction(router.stop, flit.dst.flat_index, self.ring.size)

    def cycle(self, clock):
        self.ring.tick()
        ejected = []
        for router in self.routers:
            ejected.extend(router.cycle(clock, self.stats, self.injection_enabled))
        self.stats.ejected += len(ejected)
        return ejected


def build_single_ring(n, lanes=1, hop_latency=2):
    if n < 2:
        raise ValueError("A single ring needs at least two nodes.")
    ring = Ring(ring_id=(), size=n, lanes=lanes, hop_latency=hop_latency)
    nodes = [NodeId((i,), i) for i in range(n)]
    routers = [NodeRouter(node, ring, node.flat_index) for node in nodes]
    return SingleRingNetwork(nodes, ring, routers)
