"""Shared simulation primitives: RNG, identities, flits, clock, network contract."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
TWO_POW_64 = 1 << 64


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


class SimulationError(RuntimeError):
    def __init__(self, message, cycle=None, router=None):
        where = []
        if cycle is not None:
            where.append(f"cycle {cycle}")
        if router is not None:
            where.append(f"router {router}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")
        self.cycle = cycle
        self.router = router


class Rng:
    """splitmix64 generator.

    ``below(n)`` draws from the top of the 64-bit output: with
    ``bucket = 2**64 // n`` it rejects draws ``>= bucket * n`` and returns
    ``draw // bucket``. Any implementation following this rule reproduces the
    same stream bit for bit.
    """

    __slots__ = ("state",)

    def __init__(self, seed=0):
        self.state = seed & MASK64

    def next(self):
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n):
        if n < 1:
            raise ValueError("Rng.below needs n >= 1.")
        bucket = TWO_POW_64 // n
        limit = bucket * n
        while True:
            draw = self.next()
            if draw < limit:
                return draw // bucket

    def chance(self, probability):
        """Bernoulli draw using the top 53 bits as a uniform in [0, 1)."""
        return (self.next() >> 11) * (1.0 / (1 << 53)) < probability

    def fork(self):
        return Rng(self.next())


@dataclass(frozen=True, slots=True)
class NodeId:
    digits: tuple
    flat_index: int

    def __str__(self):
        return ".".join(str(d) for d in self.digits)


class PacketId(NamedTuple):
    src: NodeId
    txn: int


@dataclass(eq=False, slots=True)
class Flit:
    packet: PacketId
    seq: int
    num_flits: int
    src: NodeId
    dst: NodeId
    enqueue_cycle: int
    inject_cycle: int | None = None
    deflections: int = 0
    ring_retries: int = 0
    hops: int = 0
    attempt: int = 0
    control: bool = False
    buffered_at: int | None = None

    def __post_init__(self):
        if not 0 <= self.seq < self.num_flits:
            raise ValueError(f"Flit seq {self.seq} outside packet of {self.num_flits} flits.")

    @property
    def key(self):
        return (self.packet, self.seq)

    def __repr__(self):
        return f"Flit({self.src}->{self.dst} txn={self.packet.txn} seq={self.seq})"


@dataclass
class SimClock:
    cycle: int = 0
    warmup_cycles: int = 0
    run_cycles: int = 0

    @property
    def total_cycles(self):
        return self.warmup_cycles + self.run_cycles

    @property
    def done(self):
        return self.cycle >= self.total_cycles

    def measures(self, flit):
        return flit.enqueue_cycle >= self.warmup_cycles


@dataclass
class NetworkStats:
    injected: int = 0
    ejected: int = 0
    transfers_up: int = 0
    transfers_down: int = 0
    transfer_deflections_up: int = 0
    transfer_deflections_down: int = 0
    swaps: int = 0
    reservations: int = 0
    throttle_activations: int = 0
    redirections: int = 0
    side_buffered: int = 0
    side_residence_max: int = 0
    priority_violations: int = 0
    golden_deflections: int = 0
    fifo_waits: list = field(default_factory=list)
    head_waits: list = field(default_factory=list)


class Network(ABC):
    """Per-cycle contract shared by every topology.

    ``cycle`` reads the registers as they were at the end of the previous
    cycle and writes the new contents; it returns the flits ejected this
    cycle. Flits waiting in injection queues are not in flight.
    """

    name = "network"

    def __init__(self, nodes):
        self.nodes = nodes
        self.stats = NetworkStats()
        self.injection_enabled = True

    @abstractmethod
    def enqueue(self, flit, front=False):
        ...

    @abstractmethod
    def cycle(self, clock):
        ...

    @abstractmethod
    def in_flight_flits(self) -> Iterator[Flit]:
        ...

    @abstractmethod
    def queued_flits(self, node_index):
        ...

    @abstractmethod
    def total_slots(self):
        ...

    def in_flight(self):
        return sum(1 for _ in self.in_flight_flits())

    def total_queued(self):
        return sum(self.queued_flits(i) for i in range(len(self.nodes)))

    def groups(self):
        """Source groups used for throughput attribution."""
        return {"all": list(range(len(self.nodes)))}

    def pending_head_waits(self, cycle):
        return []
