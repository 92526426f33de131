"""2D-mesh deflection routers: permutation-network arbitration, golden/silver priority, side buffer."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import NamedTuple

from .core import ConfigError, Network, NodeId, Rng

logger = logging.getLogger(__name__)

TXN_WINDOW = 16


class Port(IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3

    @property
    def opposite(self):
        return Port((self + 2) % 4)


STEP = {Port.N: (0, -1), Port.E: (1, 0), Port.S: (0, 1), Port.W: (-1, 0)}


class Mode(str, Enum):
    CHIPPER = "chipper"
    MINBD = "minbd"


class GoldenId(NamedTuple):
    src: int
    txn: int


def golden_packet_id(cycle, epoch_length, id_space_size, txn_window=TXN_WINDOW):
    index = (cycle // epoch_length) % id_space_size
    return GoldenId(index // txn_window, index % txn_window)


@dataclass
class GoldenState:
    epoch_length: int
    nodes: int
    txn_window: int = TXN_WINDOW

    @property
    def id_space_size(self):
        return self.nodes * self.txn_window

    def current(self, cycle):
        return golden_packet_id(cycle, self.epoch_length, self.id_space_size, self.txn_window)

    def epoch_start(self, cycle):
        return cycle - cycle % self.epoch_length

    def matches(self, flit, golden):
        return flit.packet.src.flat_index == golden.src and flit.packet.txn % self.txn_window == golden.txn


def preferred_ports(coord, dst):
    """Productive ports, the preferred one first. ``coord``/``dst`` are (x, y) with y growing south."""
    dx = dst[0] - coord[0]
    dy = dst[1] - coord[1]
    if dx == 0 and dy == 0:
        raise ValueError("No preferred port at the destination router.")
    x_port = Port.E if dx > 0 else Port.W
    y_port = Port.S if dy > 0 else Port.N
    if dx == 0:
        return [y_port]
    if dy == 0:
        return [x_port]
    if abs(dy) > abs(dx):
        return [y_port, x_port]
    return [x_port, y_port]


class Contender:
    __slots__ = ("flit", "rank", "target", "port")

    def __init__(self, flit, rank, target):
        self.flit = flit
        self.rank = rank
        self.target = target
        self.port = None

    @property
    def deflected(self):
        return self.target is None or self.port != self.target


# Stage-2 blocks: X drives (N, E), Y drives (S, W).
STAGE_TWO_PORTS = ((Port.N, Port.E), (Port.S, Port.W))


def _stage_one_want(contender):
    if contender.target is None:
        return None
    return 0 if contender.target in STAGE_TWO_PORTS[0] else 1


def _stage_two_want(block):
    def want(contender):
        if contender.target is None or contender.target not in STAGE_TWO_PORTS[block]:
            return None
        return STAGE_TWO_PORTS[block].index(contender.target)
    return want


def arbiter_block(first, second, rng, want):
    """Two-input block: the higher-priority flit takes the output toward its preference."""
    if first is None and second is None:
        return None, None
    if first is None or second is None:
        only = first or second
        return (None, only) if want(only) == 1 else (only, None)
    if first.rank < second.rank:
        winner, loser = first, second
    elif second.rank < first.rank:
        winner, loser = second, first
    elif rng.below(2) == 0:
        winner, loser = first, second
    else:
        winner, loser = second, first
    choice = want(winner)
    if choice is None:
        loser_choice = want(loser)
        choice = 1 - loser_choice if loser_choice is not None else 0
    return (winner, loser) if choice == 0 else (loser, winner)


def permute(contenders, rng):
    """Route up to four contenders (indexed by input port) to the four output ports."""
    a0, a1 = arbiter_block(contenders[Port.N], contenders[Port.E], rng, _stage_one_want)
    b0, b1 = arbiter_block(contenders[Port.S], contenders[Port.W], rng, _stage_one_want)
    x0, x1 = arbiter_block(a0, b0, rng, _stage_two_want(0))
    y0, y1 = arbiter_block(a1, b1, rng, _stage_two_want(1))
    outputs = [None] * 4
    for contender, port in ((x0, Port.N), (x1, Port.E), (y0, Port.S), (y1, Port.W)):
        if contender is not None:
            contender.port = port
            outputs[port] = contender
    return outputs


def select_silver(rng, flits, is_golden):
    candidates = [f for f in flits if f is not None and not is_golden(f)]
    if not candidates:
        return None
    return candidates[rng.below(len(candidates))]


class MeshRouter:
    __slots__ = ("node", "index", "coord", "inputs", "links", "side_buffer", "side_depth",
                 "side_starve_counter", "queue")

    def __init__(self, node, coord, side_depth=0):
        self.node = node
        self.index = node.flat_index
        self.coord = coord
        self.inputs = [None] * 4
        self.links = [None] * 4
        self.side_depth = side_depth
        self.side_buffer = deque() if side_depth else None
        self.side_starve_counter = 0
        self.queue = deque()

    def flits(self):
        for flit in self.inputs:
            if flit is not None:
                yield flit
        for flit in self.links:
            if flit is not None:
                yield flit
        if self.side_buffer:
            yield from self.side_buffer

    def slot_count(self):
        return 8 + self.side_depth


def _free_port(inputs):
    for port, flit in enumerate(inputs):
        if flit is None:
            return port
    return None


def minbd_redirect(network, router, clock, is_golden):
    """Force one random non-golden input into the side buffer so the starved head can leave."""
    buffer = router.side_buffer
    if not buffer or router.side_starve_counter <= network.c_threshold:
        return False
    candidates = [p for p, f in enumerate(router.inputs) if f is not None and not is_golden(f)]
    if not candidates:
        return False
    port = candidates[network.rng.below(len(candidates))]
    victim = router.inputs[port]
    head = buffer.popleft()
    _leave_side_buffer(network, head, clock)
    victim.buffered_at = clock.cycle
    buffer.append(victim)
    router.inputs[port] = head
    router.side_starve_counter = 0
    network.stats.redirections += 1
    return True


def _leave_side_buffer(network, flit, clock):
    residence = clock.cycle - flit.buffered_at
    if residence > network.stats.side_residence_max:
        network.stats.side_residence_max = residence
    flit.buffered_at = None


def minbd_router_cycle(network, router, clock, golden):
    """One router cycle; CHIPPER mode is the same pipeline without the side buffer."""
    stats = network.stats
    rng = network.rng
    cycle = clock.cycle

    def is_golden(flit):
        return golden is not None and network.golden.matches(flit, golden)

    ejected = []
    arrivals = [(p, f) for p, f in enumerate(router.inputs) if f is not None and f.dst.flat_index == router.index]
    arrivals.sort(key=lambda item: (not is_golden(item[1]), item[1].enqueue_cycle, item[0]))
    for port, flit in arrivals[: network.ejectors]:
        router.inputs[port] = None
        ejected.append(flit)

    redirected = False
    if router.side_buffer is not None:
        redirected = minbd_redirect(network, router, clock, is_golden)
        if not redirected:
            if router.side_buffer:
                port = _free_port(router.inputs)
                if port is None:
                    router.side_starve_counter += 1
                else:
                    head = router.side_buffer.popleft()
                    _leave_side_buffer(network, head, clock)
                    router.inputs[port] = head
                    router.side_starve_counter = 0
            else:
                router.side_starve_counter = 0

    if router.queue and network.injection_enabled:
        port = _free_port(router.inputs)
        if port is not None:
            flit = router.queue.popleft()
            flit.inject_cycle = cycle
            router.inputs[port] = flit
            stats.injected += 1

    silver = select_silver(rng, router.inputs, is_golden) if network.silver else None
    contenders = [None] * 4
    for port, flit in enumerate(router.inputs):
        if flit is None:
            continue
        if is_golden(flit):
            rank = (0, flit.seq)
        elif flit is silver:
            rank = (1, 0)
        else:
            rank = (2, 0)
        target = None
        if flit.dst.flat_index != router.index:
            target = preferred_ports(router.coord, network.coords[flit.dst.flat_index])[0]
        contenders[port] = Contender(flit, rank, target)
    router.inputs = [None] * 4

    outputs = permute(contenders, rng)
    present = [c for c in outputs if c is not None]
    if present:
        top = min(c.rank for c in present)
        leaders = [c for c in present if c.rank == top]
        if len(leaders) == 1 and leaders[0].target is not None and leaders[0].deflected:
            stats.priority_violations += 1

    if router.side_buffer is not None and not redirected and len(router.side_buffer) < router.side_depth:
        candidates = [c for c in present if c.deflected and not is_golden(c.flit)]
        if candidates:
            chosen = candidates[rng.below(len(candidates))]
            outputs[chosen.port] = None
            chosen.flit.buffered_at = cycle
            router.side_buffer.append(chosen.flit)
            stats.side_buffered += 1

    goldens = sum(1 for c in outputs if c is not None and is_golden(c.flit))
    for contender in outputs:
        if contender is None:
            continue
        flit = contender.flit
        flit.hops += 1
        if contender.deflected:
            flit.deflections += 1
            if goldens == 1 and is_golden(flit):
                stats.golden_deflections += 1
        router.links[contender.port] = flit
    return ejected


class MeshNetwork(Network):
    def __init__(self, nodes, width, height, routers, mode, strict=False, epoch_length=0,
                 c_threshold=2, rng=None):
        super().__init__(nodes)
        self.name = f"mesh_{Mode(mode).value}"
        self.width = width
        self.height = height
        self.routers = routers
        self.mode = mode
        self.strict = strict
        self.ejectors = 1 if strict else 2
        self.silver = not strict
        self.c_threshold = c_threshold
        self.rng = rng or Rng(0)
        self.golden = GoldenState(epoch_length or 8 * (width + height), len(nodes))
        self.coords = [router.coord for router in routers]
        self.wiring = []
        for router in routers:
            x, y = router.coord
            ports = []
            for port in Port:
                dx, dy = STEP[port]
                nx, ny = x + dx, y + dy
                if 0 <= nx < width and 0 <= ny < height:
                    ports.append((ny * width + nx, port.opposite))
                else:
                    # Off-mesh outputs loop back into the same router.
                    ports.append((router.index, port))
            self.wiring.append(ports)

    def enqueue(self, flit, front=False):
        queue = self.routers[flit.src.flat_index].queue
        if front:
            queue.appendleft(flit)
        else:
            queue.append(flit)

    def cycle(self, clock):
        arrivals = [[None] * 4 for _ in self.routers]
        for router in self.routers:
            for port, flit in enumerate(router.links):
                if flit is not None:
                    target, in_port = self.wiring[router.index][port]
                    arrivals[target][in_port] = flit
            router.links = [None] * 4
        golden = self.golden.current(clock.cycle)
        ejected = []
        for router in self.routers:
            ejected.extend(minbd_router_cycle(self, router, clock, golden))
        for router, inputs in zip(self.routers, arrivals):
            router.inputs = inputs
        self.stats.ejected += len(ejected)
        return ejected

    def in_flight_flits(self):
        for router in self.routers:
            yield from router.flits()

    def queued_flits(self, node_index):
        return len(self.routers[node_index].queue)

    def total_slots(self):
        return sum(router.slot_count() for router in self.routers)


def build_mesh(width, height, mode="minbd", strict=False, side_buffer=4, epoch_length=0,
               c_threshold=2, rng=None):
    if width < 2 or height < 2:
        raise ConfigError("nodes", f"mesh needs width and height >= 2, got {width}x{height}.")
    if mode not in (Mode.CHIPPER, Mode.MINBD):
        raise ConfigError("topology", f"unknown mesh mode {mode!r}.")
    strict = strict and mode == Mode.CHIPPER
    depth = side_buffer if mode == Mode.MINBD else 0
    routers = []
    for y in range(height):
        for x in range(width):
            node = NodeId((y, x), y * width + x)
            routers.append(MeshRouter(node, (x, y), side_depth=depth))
    nodes = [router.node for router in routers]
    return MeshNetwork(nodes, width, height, routers, mode, strict=strict, epoch_length=epoch_length,
                       c_threshold=c_threshold, rng=rng)
