"""Injection request generators: synthetic patterns, worst-case starvation, trace replay."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .core import ConfigError

logger = logging.getLogger(__name__)


class Pattern(str, Enum):
    UNIFORM_RANDOM = "uniform_random"
    BIT_COMPLEMENT = "bit_complement"
    TRANSPOSE = "transpose"
    ADVERSARIAL_STARVE = "adversarial_starve"
    TRACE = "trace"


@dataclass(frozen=True)
class TrafficSpec:
    pattern: Pattern = Pattern.UNIFORM_RANDOM
    rate: float = 0.1
    trace_path: str = ""
    packet_flits: int = 4

    @property
    def packet_probability(self):
        # Offered load in flits/node/cycle equals ``rate``.
        return self.rate / self.packet_flits


@dataclass(frozen=True)
class InjectionRequest:
    cycle: int
    src: int
    dst: int
    num_flits: int

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("Injection request src and dst must differ.")


class TraceError(ValueError):
    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def dest_uniform_random(rng, src, n):
    pick = rng.below(n - 1)
    return pick + 1 if pick >= src else pick


def _is_power_of_two(n):
    return n > 0 and n & (n - 1) == 0


def dest_bit_complement(src, n):
    if not _is_power_of_two(n):
        raise ConfigError("pattern", f"bit_complement needs a power-of-two node count, got {n}.")
    return ~src & (n - 1)


def dest_transpose(src, n):
    k = math.isqrt(n)
    if k * k != n:
        raise ConfigError("pattern", f"transpose needs a square node count, got {n}.")
    x, y = src % k, src // k
    dst = x * k + y
    if dst == src:
        return dest_bit_complement(src, n)
    return dst


class AdversarialStarve:
    """Rings A and C flood each other across Ring B's bridges; Ring B targets Ring D.

    Rings are the four local rings of the 16-node hierarchy, in the order
    their bridges sit on the global ring. A source enqueues a new packet
    whenever less than one packet is waiting in its injection queues.
    """

    def __init__(self, network, packet_flits):
        rings = getattr(network, "local_ring_members", None)
        if rings is None or len(network.nodes) != 16 or len(rings) != 4 or network.levels != 2:
            raise ConfigError("pattern", "adversarial_starve needs the 2-level 16-node HiRD network.")
        ring_a, ring_b, ring_c, ring_d = rings
        self.packet_flits = packet_flits
        self.targets = {}
        for src in ring_a:
            self.targets[src] = ring_c
        for src in ring_c:
            self.targets[src] = ring_a
        for src in ring_b:
            self.targets[src] = ring_d
        self.rotation = {src: 0 for src in self.targets}

    def generate(self, cycle, network):
        requests = []
        for src, ring in self.targets.items():
            if network.queued_flits(src) >= self.packet_flits:
                continue
            position = self.rotation[src]
            self.rotation[src] = (position + 1) % len(ring)
            requests.append(InjectionRequest(cycle, src, ring[position], self.packet_flits))
        return requests


def gen_adversarial_starve(generator, network, cycle):
    return generator.generate(cycle, network)


def load_trace(path):
    requests = []
    last_cycle = -1
    data = Path(path).read_bytes()
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        line_number = data.count(b"\n", 0, exc.start) + 1
        raise TraceError(line_number, f"non-ASCII byte 0x{data[exc.start]:02x}.") from None
    for line_number, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TraceError(line_number, f"expected 'cycle src dst num_flits', got {raw!r}.")
        try:
            cycle, src, dst, num_flits = (int(part, 10) for part in parts)
        except ValueError:
            raise TraceError(line_number, f"non-decimal field in {raw!r}.") from None
        if min(cycle, src, dst) < 0 or num_flits < 1:
            raise TraceError(line_number, "fields must be non-negative and num_flits >= 1.")
        if src == dst:
            raise TraceError(line_number, "src and dst must differ.")
        if cycle < last_cycle:
            raise TraceError(line_number, f"cycle {cycle} is earlier than {last_cycle}.")
        last_cycle = cycle
        requests.append(InjectionRequest(cycle, src, dst, num_flits))
    return requests


class TrafficGenerator:
    """Per-instance traffic state; ``generate`` is called once per cycle."""

    def __init__(self, spec, network, rng):
        self.spec = spec
        self.rng = rng
        self.n = len(network.nodes)
        self._adversarial = None
        self._trace = []
        self._trace_pos = 0
        if spec.pattern == Pattern.ADVERSARIAL_STARVE:
            self._adversarial = AdversarialStarve(network, spec.packet_flits)
        elif spec.pattern == Pattern.TRACE:
            try:
                self._trace = load_trace(spec.trace_path)
            except OSError as exc:
                raise ConfigError("trace_path", f"cannot read {spec.trace_path}: {exc.strerror}.") from exc
            for request in self._trace:
                if max(request.src, request.dst) >= self.n:
                    raise ConfigError("trace_path", f"trace names node {max(request.src, request.dst)} "
                                                    f"but the network has {self.n}.")
            logger.info("Loaded %d trace requests from %s", len(self._trace), spec.trace_path)
        elif spec.pattern == Pattern.BIT_COMPLEMENT:
            dest_bit_complement(0, self.n)
        elif spec.pattern == Pattern.TRANSPOSE:
            dest_transpose(0, self.n)

    def generate(self, cycle, network):
        pattern = self.spec.pattern
        if pattern == Pattern.ADVERSARIAL_STARVE:
            return gen_adversarial_starve(self._adversarial, network, cycle)
        if pattern == Pattern.TRACE:
            return self._replay(cycle)
        probability = self.spec.packet_probability
        if probability <= 0.0:
            return []
        requests = []
        for src in range(self.n):
            if not self.rng.chance(probability):
                continue
            if pattern == Pattern.UNIFORM_RANDOM:
                dst = dest_uniform_random(self.rng, src, self.n)
            elif pattern == Pattern.BIT_COMPLEMENT:
                dst = dest_bit_complement(src, self.n)
            else:
                dst = dest_transpose(src, self.n)
            requests.append(InjectionRequest(cycle, src, dst, self.spec.packet_flits))
        return requests

    def _replay(self, cycle):
        requests = []
        while self._trace_pos < len(self._trace) and self._trace[self._trace_pos].cycle <= cycle:
            request = self._trace[self._trace_pos]
            self._trace_pos += 1
            if request.cycle == cycle:
                requests.append(request)
        return requests
