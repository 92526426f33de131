"""Retransmit-Once reassembly: arrivals are always consumed or dropped in the cycle they eject."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .core import Flit, PacketId, SimulationError

logger = logging.getLogger(__name__)


class Outcome(Enum):
    DELIVERED = "delivered"
    STORED = "stored"
    DROPPED = "dropped"


@dataclass
class ReassemblySlot:
    packet: PacketId
    num_flits: int
    arrived: int = 0
    granted: bool = False
    received: int = 0

    @property
    def complete(self):
        return self.arrived == (1 << self.num_flits) - 1

    def mark(self, seq):
        self.arrived |= 1 << seq


class ReassemblyUnit:
    """Per-node reassembly slots plus the retransmit queue (oldest drop first).

    A packet that was dropped arrives exactly twice per flit: once as the
    original and once as the retransmission. ``retired`` counts the copies
    still expected after such a packet is delivered and forgets it at zero.
    """

    def __init__(self, capacity=16):
        if capacity < 1:
            raise ValueError("Reassembly capacity must be at least 1.")
        self.capacity = capacity
        self.slots = {}
        self.pending = deque()
        self.pending_drops = {}
        self.retired = {}

    @property
    def free_slots(self):
        return self.capacity - len(self.slots)

    def receive_flit(self, flit):
        packet = flit.packet
        slot = self.slots.get(packet)
        if slot is None:
            if packet in self.retired:
                # Late copy of a packet already delivered after a retransmit.
                self.retired[packet] -= 1
                if not self.retired[packet]:
                    del self.retired[packet]
                return Outcome.STORED
            if self.free_slots == 0 or packet in self.pending_drops:
                if packet not in self.pending_drops:
                    self.pending.append(packet)
                    self.pending_drops[packet] = 0
                self.pending_drops[packet] += 1
                return Outcome.DROPPED
            slot = self.slots[packet] = ReassemblySlot(packet, flit.num_flits)
        elif slot.num_flits == 0:
            slot.num_flits = flit.num_flits
        slot.mark(flit.seq)
        slot.received += 1
        if not slot.complete:
            return Outcome.STORED
        del self.slots[packet]
        if slot.granted:
            remaining = 2 * slot.num_flits - slot.received
            if remaining > 0:
                self.retired[packet] = remaining
        return Outcome.DELIVERED

    def grant_retransmit(self):
        """Reserve a freed slot for the oldest dropped packet and name it, or return None."""
        if not self.pending or self.free_slots == 0:
            return None
        packet = self.pending.popleft()
        drops = self.pending_drops.pop(packet)
        self.slots[packet] = ReassemblySlot(packet, 0, granted=True, received=drops)
        return packet


@dataclass
class HeldPacket:
    dst: object
    num_flits: int
    enqueue_cycle: int
    retransmitted: bool = False


class SenderStore:
    """Packets a source keeps until delivery is confirmed.

    Transaction ids are issued in order, so any id below ``issued`` that is no
    longer held has been delivered.
    """

    def __init__(self):
        self.held = {}
        self.issued = 0

    def hold(self, packet, dst, num_flits, enqueue_cycle):
        self.held[packet] = HeldPacket(dst, num_flits, enqueue_cycle)
        self.issued = max(self.issued, packet.txn + 1)

    def confirm(self, packet):
        return self.held.pop(packet, None)

    def retransmit(self, packet, cycle=None):
        """Fresh flits for ``packet``, or None when it was delivered before the request landed."""
        held = self.held.get(packet)
        if held is None:
            if packet.txn < self.issued:
                return None
            raise SimulationError(f"retransmit requested for unknown packet {packet.txn}",
                                  cycle=cycle, router=str(packet.src))
        held.retransmitted = True
        return [
            Flit(packet=packet, seq=seq, num_flits=held.num_flits, src=packet.src, dst=held.dst,
                 enqueue_cycle=held.enqueue_cycle, attempt=1)
            for seq in range(held.num_flits)
        ]
