from django.test import SimpleTestCase

from simulator.core import Flit, PacketId, SimClock
from simulator.ring import Direction, RingLane, build_single_ring, choose_direction, ring_distance


def make_flit(network, src, dst, txn=0, cycle=0):
    nodes = network.nodes
    return Flit(PacketId(nodes[src], txn), 0, 1, nodes[src], nodes[dst], enqueue_cycle=cycle)


def place_arriving(lane, stop, flit):
    """Put ``flit`` in the register ``stop`` reads on the next network cycle."""
    lane.slots[(lane._positions[stop] - (lane.offset + 1)) % lane.length] = flit


def deliver(network, flit, limit=500):
    clock = SimClock(0, 0, limit)
    network.enqueue(flit)
    while clock.cycle < limit:
        if flit in network.cycle(clock):
            return clock.cycle - flit.enqueue_cycle
        clock.cycle += 1
    raise AssertionError("flit was never delivered")


class ChooseDirectionTests(SimpleTestCase):
    def test_shorter_way(self):
        self.assertEqual(choose_direction(0, 3, 8), Direction.CW)
        self.assertEqual(choose_direction(2, 1, 4), Direction.CCW)

    def test_tie_goes_clockwise(self):
        self.assertEqual(choose_direction(0, 4, 8), Direction.CW)

    def test_distance(self):
        self.assertEqual(ring_distance(0, 5, 8), 3)


class RingLaneTests(SimpleTestCase):
    def test_clockwise_flit_reaches_next_stop_after_hop_latency(self):
        lane = RingLane(stops=4, hop_latency=2, direction=Direction.CW)
        slot = lane.slot_index(0)
        lane.tick()
        lane.tick()
        self.assertEqual(lane.slot_index(1), slot)

    def test_counter_clockwise_flit_reaches_previous_stop(self):
        lane = RingLane(stops=4, hop_latency=2, direction=Direction.CCW)
        slot = lane.slot_index(0)
        lane.tick()
        lane.tick()
        self.assertEqual(lane.slot_index(3), slot)


class SingleRingTests(SimpleTestCase):
    def test_smallest_ring(self):
        network = build_single_ring(2)
        self.assertEqual(len(network.routers), 2)
        with self.assertRaises(ValueError):
            build_single_ring(1)

    def test_wide_ring_has_two_lanes_each_way(self):
        network = build_single_ring(16, lanes=2)
        self.assertEqual(network.ring.lane_count, 2)
        self.assertEqual(network.total_slots(), 2 * 2 * 16 * 2)

    def test_one_hop_takes_two_cycles(self):
        network = build_single_ring(8)
        self.assertEqual(deliver(network, make_flit(network, 0, 1)), 2)

    def test_zero_load_latency_is_hop_latency_times_distance(self):
        for hop_latency in (1, 2, 3):
            for dst in range(1, 8):
                network = build_single_ring(8, hop_latency=hop_latency)
                latency = deliver(network, make_flit(network, 0, dst))
                self.assertEqual(latency, hop_latency * ring_distance(0, dst, 8))

    def test_ejection_frees_the_slot(self):
        network = build_single_ring(8)
        flit = make_flit(network, 2, 3)
        place_arriving(network.ring.lanes[Direction.CW][0], 3, flit)
        ejected = network.cycle(SimClock(0, 0, 10))
        self.assertEqual(ejected, [flit])
        self.assertEqual(network.in_flight(), 0)

    def test_two_injections_in_one_cycle(self):
        network = build_single_ring(8)
        network.enqueue(make_flit(network, 0, 1, txn=0))
        network.enqueue(make_flit(network, 0, 7, txn=1))
        network.cycle(SimClock(0, 0, 10))
        self.assertEqual(network.stats.injected, 2)
        self.assertEqual(network.queued_flits(0), 0)

    def test_passing_flit_blocks_injection(self):
        network = build_single_ring(8)
        clock = SimClock(0, 0, 100)
        passing = make_flit(network, 0, 3, txn=0)
        network.enqueue(passing)
        network.cycle(clock)
        clock.cycle = 1
        network.cycle(clock)
        clock.cycle = 2
        waiting = make_flit(network, 1, 2, txn=0, cycle=2)
        network.enqueue(waiting)
        network.cycle(clock)
        self.assertEqual(network.queued_flits(1), 1)
        self.assertEqual(passing.hops, 2)
        clock.cycle = 3
        network.cycle(clock)
        self.assertEqual(network.queued_flits(1), 0)
        self.assertEqual(waiting.inject_cycle, 3)

    def test_second_arrival_for_same_node_circles_again(self):
        network = build_single_ring(8, lanes=2)
        first = make_flit(network, 0, 2, txn=0)
        second = make_flit(network, 0, 2, txn=1)
        lanes = network.ring.lanes[Direction.CW]
        place_arriving(lanes[0], 2, first)
        place_arriving(lanes[1], 2, second)
        ejected = network.cycle(SimClock(0, 0, 10))
        self.assertEqual(ejected, [first])
        self.assertEqual(second.deflections, 1)
        self.assertEqual(network.in_flight(), 1)

    def test_throttled_router_does_not_inject(self):
        network = build_single_ring(4)
        network.enqueue(make_flit(network, 0, 1))
        network.routers[0].throttled = True
        network.cycle(SimClock(0, 0, 10))
        self.assertEqual(network.stats.injected, 0)
        self.assertEqual(network.routers[0].starve_counter, 0)

    def test_starve_counter_counts_blocked_cycles(self):
        network = build_single_ring(8)
        clock = SimClock(0, 0, 10)
        place_arriving(network.ring.lanes[Direction.CW][0], 0, make_flit(network, 7, 4, txn=9))
        network.enqueue(make_flit(network, 0, 1))
        network.cycle(clock)
        self.assertEqual(network.routers[0].starve_counter, 1)
        clock.cycle = 1
        network.cycle(clock)
        self.assertEqual(network.routers[0].starve_counter, 0)

    def test_ring_drains_within_one_round_trip(self):
        network = build_single_ring(8)
        clock = SimClock(0, 0, 100)
        for src in range(8):
            for txn, dst in enumerate(d for d in range(8) if d != src):
                network.enqueue(make_flit(network, src, dst, txn=txn))
        for _ in range(5):
            network.cycle(clock)
            clock.cycle += 1
        self.assertGreater(network.in_flight(), 0)
        network.injection_enabled = False
        for _ in range(network.ring.round_trip):
            network.cycle(clock)
            clock.cycle += 1
        self.assertEqual(network.in_flight(), 0)
