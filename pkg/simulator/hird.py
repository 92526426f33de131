"""Hierarchical bufferless rings: bridges, routing, and the two forward-progress guarantees."""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .core import ConfigError, NodeId, SimulationError
from .ring import NodeRouter, Ring, RingNetworkBase, choose_direction, ring_distance

logger = logging.getLogger(__name__)

SUPPORTED_SIZES = {16: 2, 64: 3}
SUPPORTED_BRIDGES = (4, 8, 16)
RING_FANOUT = 4


@dataclass(frozen=True)
class RingId:
    prefix: tuple = ()

    @property
    def level(self):
        return len(self.prefix)

    def __str__(self):
        return ".".join(str(d) for d in self.prefix) or "global"


class RouteDecision(Enum):
    EJECT = "eject"
    STAY = "stay"
    TRANSFER_UP = "transfer_up"
    TRANSFER_DOWN = "transfer_down"


def route_decision(dst, ring, levels, here=None):
    prefix = ring.prefix
    if tuple(dst.digits[: len(prefix)]) != prefix:
        return RouteDecision.TRANSFER_UP
    if len(prefix) < levels - 1:
        return RouteDecision.TRANSFER_DOWN
    if here is not None and here.flat_index == dst.flat_index:
        return RouteDecision.EJECT
    return RouteDecision.STAY


class TransferFifo:
    """Bounded queue between two rings. A reservation admits only the named flit.

    ``ports`` is the number of lane interfaces on the wider ring: at most that
    many flits enter, and at most that many leave, per cycle.
    """

    __slots__ = ("depth", "ports", "entries", "reserved_for", "head_since", "accepted_at", "accepted")

    def __init__(self, depth, ports=1):
        self.depth = depth
        self.ports = ports
        self.entries = deque()
        self.reserved_for = None
        self.head_since = 0
        self.accepted_at = -1
        self.accepted = 0

    def __len__(self):
        return len(self.entries)

    def can_accept(self, flit, cycle):
        if len(self.entries) >= self.depth:
            return False
        if self.accepted_at == cycle and self.accepted >= self.ports:
            return False
        return self.reserved_for is None or self.reserved_for == flit.key

    def push(self, flit, cycle):
        if len(self.entries) >= self.depth:
            raise SimulationError("transfer FIFO overflow", cycle=cycle)
        if not self.entries:
            self.head_since = cycle
        self.entries.append((flit, cycle))
        if self.accepted_at != cycle:
            self.accepted_at = cycle
            self.accepted = 0
        self.accepted += 1
        if self.reserved_for == flit.key:
            self.reserved_for = None

    def head(self):
        return self.entries[0][0] if self.entries else None

    def pop(self, cycle):
        flit, entered = self.entries.popleft()
        head_wait = cycle - self.head_since
        self.head_since = cycle
        return flit, cycle - entered, head_wait

    def flits(self):
        return (flit for flit, _ in self.entries)


class SlotObserver:
    """Watches one travelling slot of one lane, once per round trip.

    ``observed_slot`` is the slot identity to watch, ``current_slot`` the one
    at the bridge register this cycle, ``circle_count`` the round trips the
    watched flit has stayed on the ring.
    """

    __slots__ = ("round_trip", "retry_threshold", "observed_slot", "current_slot", "circle_count", "observed")

    def __init__(self, round_trip, retry_threshold, start_slot=0):
        self.round_trip = round_trip
        self.retry_threshold = retry_threshold
        self.observed_slot = start_slot
        self.current_slot = start_slot
        self.circle_count = 0
        self.observed = None

    def observe(self, slot, flit, wants_transfer):
        """Returns ``("reserve", key)``, ``("release", key)`` or ``None``."""
        self.current_slot = slot
        if slot != self.observed_slot:
            return None
        if self.observed is None:
            if flit is not None and wants_transfer:
                self.observed = flit.key
                self.circle_count = 0
            else:
                self._advance()
            return None
        if flit is not None and wants_transfer and flit.key == self.observed:
            self.circle_count += 1
            if self.circle_count > self.retry_threshold:
                return ("reserve", self.observed)
            return None
        released = self.observed
        self.observed = None
        self.circle_count = 0
        self._advance()
        return ("release", released)

    def _advance(self):
        # The slot one register behind arrives next cycle.
        self.observed_slot = (self.observed_slot - 1) % self.round_trip


CHILD, PARENT = 0, 1


class BridgeRouter:
    def __init__(self, name, child, child_stop, parent, parent_stop, subtree,
                 fifo_up_depth=1, fifo_down_depth=4, retry_threshold=2):
        self.name = name
        self.child = child
        self.child_stop = child_stop
        self.parent = parent
        self.parent_stop = parent_stop
        self.subtree = subtree
        ports = parent.lane_count
        self.fifo_up = TransferFifo(fifo_up_depth * ports, ports)
        self.fifo_down = TransferFifo(fifo_down_depth * ports, ports)
        self.observers = {}
        for side, ring in ((CHILD, child), (PARENT, parent)):
            for lane in ring.all_lanes():
                self.observers[(side, lane.direction, lane.index)] = SlotObserver(lane.length, retry_threshold)

    def wants_up(self, flit):
        return flit.dst.flat_index not in self.subtree

    def wants_down(self, flit):
        return flit.dst.flat_index in self.subtree

    def fifos(self):
        return (self.fifo_up, self.fifo_down)

    def cycle(self, network, clock, transfer_guarantee=True):
        cycle = clock.cycle
        stats = network.stats
        if transfer_guarantee:
            transfer_guarantee_cycle(self, stats, cycle)
        swapped = swap_rule(self, clock, stats)
        child_skip, parent_skip = swapped if swapped is not None else (None, None)
        self._transfer_side(self.child, self.child_stop, self.fifo_up, self.wants_up, True, clock, stats, child_skip)
        self._transfer_side(self.parent, self.parent_stop, self.fifo_down, self.wants_down, False, clock, stats, parent_skip)
        self._inject_head(network, self.fifo_up, self.parent, self.parent_stop, clock, stats)
        self._inject_head(network, self.fifo_down, self.child, self.child_stop, clock, stats)

    def _transfer_side(self, ring, stop, fifo, wants, up, clock, stats, skip):
        cycle = clock.cycle
        for lane in ring.all_lanes():
            if lane is skip:
                continue
            slot = lane.slot_index(stop)
            flit = lane.slots[slot]
            if flit is None:
                continue
            if not wants(flit):
                flit.hops += 1
                continue
            if fifo.can_accept(flit, cycle):
                lane.slots[slot] = None
                fifo.push(flit, cycle)
                if up:
                    stats.transfers_up += 1
                else:
                    stats.transfers_down += 1
                continue
            flit.ring_retries += 1
            flit.deflections += 1
            flit.hops += 1
            if clock.measures(flit):
                if up:
                    stats.transfer_deflections_up += 1
                else:
                    stats.transfer_deflections_down += 1

    def _inject_head(self, network, fifo, ring, stop, clock, stats):
        for _ in range(fifo.ports):
            flit = fifo.head()
            if flit is None:
                return
            preferred = network.direction_from(ring, stop, flit.dst.flat_index)
            # Falls back to the other direction when every preferred lane is taken.
            lanes = ring.lanes[preferred] + ring.lanes[1 - preferred]
            free = next((lane for lane in lanes if lane.slots[lane.slot_index(stop)] is None), None)
            if free is None:
                return
            flit, wait, head_wait = fifo.pop(clock.cycle)
            flit.hops += 1
            free.slots[free.slot_index(stop)] = flit
            if clock.measures(flit):
                stats.fifo_waits.append(wait)
                stats.head_waits.append(head_wait)


def swap_rule(bridge, clock, stats):
    """Exchange one child arrival that needs to go up with one parent arrival that needs to come down.

    Every lane of both rings is checked; the first qualifying pair is swapped.
    Returns the two lanes involved, or ``None``.
    """
    child_lane = going_up = None
    for lane in bridge.child.all_lanes():
        flit = lane.slots[lane.slot_index(bridge.child_stop)]
        if flit is not None and bridge.wants_up(flit):
            child_lane, going_up = lane, flit
            break
    if child_lane is None:
        return None
    parent_lane = going_down = None
    for lane in bridge.parent.all_lanes():
        flit = lane.slots[lane.slot_index(bridge.parent_stop)]
        if flit is not None and bridge.wants_down(flit):
            parent_lane, going_down = lane, flit
            break
    if parent_lane is None:
        return None
    child_lane.slots[child_lane.slot_index(bridge.child_stop)] = going_down
    parent_lane.slots[parent_lane.slot_index(bridge.parent_stop)] = going_up
    going_up.hops += 1
    going_down.hops += 1
    stats.swaps += 1
    stats.transfers_up += 1
    stats.transfers_down += 1
    return child_lane, parent_lane


def transfer_guarantee_cycle(bridge, stats, cycle):
    for side, ring, stop, fifo, wants in (
        (CHILD, bridge.child, bridge.child_stop, bridge.fifo_up, bridge.wants_up),
        (PARENT, bridge.parent, bridge.parent_stop, bridge.fifo_down, bridge.wants_down),
    ):
        for lane in ring.all_lanes():
            slot = lane.slot_index(stop)
            flit = lane.slots[slot]
            observer = bridge.observers[(side, lane.direction, lane.index)]
            event = observer.observe(slot, flit, flit is not None and wants(flit))
            if event is None:
                continue
            action, key = event
            if action == "reserve" and fifo.reserved_for is None:
                fifo.reserved_for = key
                stats.reservations += 1
                logger.debug("Bridge %s reserved a FIFO entry at cycle %d", bridge.name, cycle)
            elif action == "release" and fifo.reserved_for == key:
                fifo.reserved_for = None


@dataclass
class ThrottleState:
    threshold: int = 100
    latency: int = 1
    ring_age: dict = field(default_factory=dict)
    ring_level: dict = field(default_factory=dict)
    blocked: frozenset = frozenset()
    activations: int = 0


def injection_guarantee_cycle(state, routers, local_prefixes):
    """Throttle new injections around starved nodes, widening one level per period."""
    starved = {r.index for r in routers if r.starve_counter >= state.threshold}
    if not starved and not state.ring_age:
        if state.blocked:
            state.blocked = frozenset()
            for router in routers:
                router.throttled = False
        return state
    starved_rings = {r.ring_prefix for r in routers if r.index in starved}
    step = state.threshold + state.latency
    blocked = set()
    for prefix in local_prefixes:
        if prefix not in starved_rings:
            state.ring_age.pop(prefix, None)
            state.ring_level.pop(prefix, None)
            continue
        age = state.ring_age.get(prefix, 0) + 1
        state.ring_age[prefix] = age
        if age == 1:
            state.activations += 1
        level = min(len(prefix), (age - 1) // step)
        if level > state.ring_level.get(prefix, 0):
            logger.debug("Throttle around ring %s escalated to level %d", prefix, level)
        state.ring_level[prefix] = level
        ancestor = prefix[: len(prefix) - level]
        blocked.update(p for p in local_prefixes if p[: len(ancestor)] == ancestor)
    state.blocked = frozenset(blocked)
    for router in routers:
        router.throttled = router.ring_prefix in state.blocked and router.index not in starved
    return state


def _interleave(members, ups):
    if not ups:
        return list(members)
    chunk = len(members) // len(ups)
    stops = []
    for i, up in enumerate(ups):
        stops.append(up)
        stops.extend(members[i * chunk:(i + 1) * chunk])
    return stops


class HirdNetwork(RingNetworkBase):
    name = "hird"

    def __init__(self, nodes, rings, routers, bridges, levels, injection_guarantee=True,
                 transfer_guarantee=True, injection_threshold=100, throttle_latency=1):
        super().__init__(nodes, list(rings.values()), routers)
        self.ring_by_prefix = rings
        self.bridges = bridges
        self.levels = levels
        self.injection_guarantee = injection_guarantee
        self.transfer_guarantee = transfer_guarantee
        self.throttle = ThrottleState(threshold=injection_threshold, latency=throttle_latency)
        self.local_prefixes = sorted(p for p in rings if len(p) == levels - 1)
        self.local_ring_members = [
            [r.index for r in routers if r.ring_prefix == prefix] for prefix in self.local_prefixes
        ]
        self._exits_up = {}
        self._exits_down = {}
        for bridge in bridges:
            self._exits_up.setdefault(bridge.child.ring_id.prefix, []).append(bridge.child_stop)
            self._exits_down.setdefault(
                (bridge.parent.ring_id.prefix, bridge.child.ring_id.prefix), []
            ).append(bridge.parent_stop)
        self._directions = {}

    def waypoints(self, ring, dst_index):
        dst = self.nodes[dst_index]
        decision = route_decision(dst, ring.ring_id, self.levels)
        prefix = ring.ring_id.prefix
        if decision is RouteDecision.TRANSFER_UP:
            return self._exits_up[prefix]
        if decision is RouteDecision.TRANSFER_DOWN:
            return self._exits_down[(prefix, tuple(dst.digits[: len(prefix) + 1]))]
        return [self.routers[dst_index].stop]

    def direction_from(self, ring, stop, dst_index):
        key = (ring.ring_id.prefix, stop, dst_index)
        direction = self._directions.get(key)
        if direction is None:
            best = min(
                (ring_distance(stop, target, ring.size), choose_direction(stop, target, ring.size))
                for target in self.waypoints(ring, dst_index)
            )
            direction = self._directions[key] = best[1]
        return direction

    def injection_direction(self, router, flit):
        return self.direction_from(router.ring, router.stop, flit.dst.flat_index)

    def cycle(self, clock):
        for ring in self.rings:
            ring.tick()
        if self.injection_guarantee:
            injection_guarantee_cycle(self.throttle, self.routers, self.local_prefixes)
            self.stats.throttle_activations = self.throttle.activations
        ejected = []
        for router in self.routers:
            ejected.extend(router.cycle(clock, self.stats, self.injection_enabled))
        for bridge in self.bridges:
            bridge.cycle(self, clock, self.transfer_guarantee)
        self.stats.ejected += len(ejected)
        return ejected

    def in_flight_flits(self):
        yield from super().in_flight_flits()
        for bridge in self.bridges:
            for fifo in bridge.fifos():
                yield from fifo.flits()

    def total_slots(self):
        return super().total_slots() + sum(f.depth for b in self.bridges for f in b.fifos())

    def groups(self):
        return {
            str(RingId(prefix)): members
            for prefix, members in zip(self.local_prefixes, self.local_ring_members)
        }

    def pending_head_waits(self, cycle):
        waits = []
        for bridge in self.bridges:
            for fifo in bridge.fifos():
                if fifo.entries:
                    waits.append(cycle - fifo.head_since)
        return waits


def build_hird(nodes=16, bridges=8, lane_ratio=2, fifo_up=1, fifo_down=4, hop_latency=2,
               global_hop_latency=2, injection_guarantee=True, transfer_guarantee=True,
               injection_threshold=100, retry_threshold=2, throttle_latency=1):
    if nodes not in SUPPORTED_SIZES:
        raise ConfigError("nodes", f"hird supports {sorted(SUPPORTED_SIZES)} nodes, got {nodes}.")
    if bridges not in SUPPORTED_BRIDGES:
        raise ConfigError("bridges", f"bridges must be one of {SUPPORTED_BRIDGES}, got {bridges}.")
    levels = SUPPORTED_SIZES[nodes]
    per_ring = bridges // RING_FANOUT
    node_ids = [
        NodeId(digits, flat)
        for flat, digits in enumerate(itertools.product(range(RING_FANOUT), repeat=levels))
    ]

    layouts = {}

    def lay_out(prefix):
        if len(prefix) == levels - 1:
            members = [("node", n.flat_index) for n in node_ids if n.digits[:-1] == prefix]
        else:
            members = []
            for digit in range(RING_FANOUT):
                child = prefix + (digit,)
                lay_out(child)
                members.extend(("down", (child, j)) for j in range(per_ring))
        ups = [("up", (prefix, j)) for j in range(per_ring)] if prefix else []
        layouts[prefix] = _interleave(members, ups)

    lay_out(())

    rings = {}
    for prefix in sorted(layouts, key=lambda p: (len(p), p)):
        local = len(prefix) == levels - 1
        rings[prefix] = Ring(
            RingId(prefix),
            size=len(layouts[prefix]),
            lanes=lane_ratio ** (levels - 1 - len(prefix)),
            hop_latency=hop_latency if local else global_hop_latency,
        )

    routers = [None] * nodes
    bridge_routers = []
    for prefix, stops in layouts.items():
        for stop, (kind, ref) in enumerate(stops):
            if kind == "node":
                routers[ref] = NodeRouter(node_ids[ref], rings[prefix], stop, ring_prefix=prefix)
            elif kind == "up":
                parent = prefix[:-1]
                subtree = frozenset(n.flat_index for n in node_ids if n.digits[: len(prefix)] == prefix)
                bridge_routers.append(BridgeRouter(
                    name=f"{RingId(prefix)}/{ref[1]}",
                    child=rings[prefix],
                    child_stop=stop,
                    parent=rings[parent],
                    parent_stop=layouts[parent].index(("down", ref)),
                    subtree=subtree,
                    fifo_up_depth=fifo_up,
                    fifo_down_depth=fifo_down,
                    retry_threshold=retry_threshold,
                ))
    logger.debug("Built %d-node hierarchy: %d rings, %d bridges", nodes, len(rings), len(bridge_routers))
    return HirdNetwork(
        node_ids, rings, routers, bridge_routers, levels,
        injection_guarantee=injection_guarantee,
        transfer_guarantee=transfer_guarantee,
        injection_threshold=injection_threshold,
        throttle_latency=throttle_latency,
    )
