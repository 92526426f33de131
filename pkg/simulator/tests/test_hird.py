import copy

from django.test import SimpleTestCase

from simulator.config import ExperimentConfig
from simulator.core import ConfigError, Flit, NetworkStats, NodeId, PacketId, SimClock
from simulator.engine import Simulation
from simulator.hird import (
    RingId,
    RouteDecision,
    SlotObserver,
    ThrottleState,
    TransferFifo,
    _interleave,
    build_hird,
    injection_guarantee_cycle,
    route_decision,
)
from simulator.ring import Direction


def make_flit(network, src, dst, txn=0, seq=0, num_flits=1):
    nodes = network.nodes
    return Flit(PacketId(nodes[src], txn), seq, num_flits, nodes[src], nodes[dst], enqueue_cycle=0)


def register(ring, stop, direction=Direction.CW, lane=0):
    """(lane, slot) the given stop reads this cycle."""
    ring_lane = ring.lanes[direction][lane]
    return ring_lane, ring_lane.slot_index(stop)


class RouteDecisionTests(SimpleTestCase):
    def test_local_ring_destination(self):
        dst = NodeId((0, 3), 3)
        self.assertEqual(route_decision(dst, RingId((0,)), levels=2), RouteDecision.STAY)
        self.assertEqual(route_decision(dst, RingId((0,)), levels=2, here=dst), RouteDecision.EJECT)

    def test_other_local_ring_goes_up(self):
        self.assertEqual(route_decision(NodeId((2, 1), 9), RingId((0,)), levels=2), RouteDecision.TRANSFER_UP)

    def test_global_ring_goes_down(self):
        self.assertEqual(route_decision(NodeId((2, 1), 9), RingId(()), levels=2), RouteDecision.TRANSFER_DOWN)


class BuildTests(SimpleTestCase):
    def test_sixteen_nodes_eight_bridges(self):
        network = build_hird(16, bridges=8)
        self.assertEqual(len(network.routers), 16)
        self.assertEqual(len(network.bridges), 8)
        self.assertEqual(network.ring_by_prefix[()].size, 8)
        self.assertEqual(network.ring_by_prefix[()].lane_count, 2)
        self.assertEqual(network.ring_by_prefix[(0,)].size, 6)
        self.assertEqual(network.ring_by_prefix[(0,)].lane_count, 1)
        self.assertEqual(network.local_ring_members[1], [4, 5, 6, 7])

    def test_bridge_counts_set_local_ring_size(self):
        self.assertEqual(build_hird(16, bridges=4).ring_by_prefix[(0,)].size, 5)
        self.assertEqual(build_hird(16, bridges=16).ring_by_prefix[(0,)].size, 8)

    def test_sixty_four_nodes_three_levels(self):
        network = build_hird(64)
        self.assertEqual(network.levels, 3)
        self.assertEqual(len(network.bridges), 40)
        self.assertEqual(network.ring_by_prefix[(0, 0)].lane_count, 1)
        self.assertEqual(network.ring_by_prefix[(0,)].lane_count, 2)
        self.assertEqual(network.ring_by_prefix[()].lane_count, 4)
        self.assertEqual(network.ring_by_prefix[(0,)].size, 10)
        self.assertEqual(network.ring_by_prefix[()].size, 8)

    def test_unsupported_sizes(self):
        with self.assertRaises(ConfigError):
            build_hird(15)
        with self.assertRaises(ConfigError):
            build_hird(16, bridges=5)

    def test_bridges_interleave_with_nodes(self):
        self.assertEqual(_interleave(["n0", "n1", "n2", "n3"], ["b0", "b1"]), ["b0", "n0", "n1", "b1", "n2", "n3"])

    def test_global_ring_uses_its_own_hop_latency(self):
        network = build_hird(16, global_hop_latency=3)
        self.assertEqual(network.ring_by_prefix[()].round_trip, 24)
        self.assertEqual(network.ring_by_prefix[(0,)].round_trip, 12)


class TransferFifoTests(SimpleTestCase):
    def setUp(self):
        self.network = build_hird(16)

    def test_depth_bound_and_one_enqueue_per_cycle(self):
        fifo = TransferFifo(depth=2)
        a, b, c = (make_flit(self.network, 0, 9, txn=t) for t in range(3))
        fifo.push(a, 0)
        self.assertFalse(fifo.can_accept(b, 0))
        self.assertTrue(fifo.can_accept(b, 1))
        fifo.push(b, 1)
        self.assertFalse(fifo.can_accept(c, 2))

    def test_reservation_admits_only_its_flit(self):
        fifo = TransferFifo(depth=4)
        stuck, other = make_flit(self.network, 0, 9, txn=0), make_flit(self.network, 0, 9, txn=1)
        fifo.reserved_for = stuck.key
        self.assertFalse(fifo.can_accept(other, 5))
        self.assertTrue(fifo.can_accept(stuck, 5))
        fifo.push(stuck, 5)
        self.assertIsNone(fifo.reserved_for)

    def test_pop_reports_wait_and_head_wait(self):
        fifo = TransferFifo(depth=4)
        first, second = make_flit(self.network, 0, 9, txn=0), make_flit(self.network, 0, 9, txn=1)
        fifo.push(first, 10)
        fifo.push(second, 11)
        self.assertEqual(fifo.pop(15), (first, 5, 5))
        self.assertEqual(fifo.pop(18), (second, 7, 3))


class SlotObserverTests(SimpleTestCase):
    def setUp(self):
        self.flit = make_flit(build_hird(16), 0, 9)

    def test_empty_slot_advances(self):
        observer = SlotObserver(round_trip=12, retry_threshold=2)
        self.assertIsNone(observer.observe(0, None, False))
        self.assertEqual(observer.observed_slot, 11)

    def test_other_slots_are_ignored(self):
        observer = SlotObserver(round_trip=12, retry_threshold=2)
        self.assertIsNone(observer.observe(5, self.flit, True))
        self.assertIsNone(observer.observed)
        self.assertEqual(observer.current_slot, 5)

    def test_stuck_flit_is_reserved_after_threshold(self):
        observer = SlotObserver(round_trip=12, retry_threshold=2)
        self.assertIsNone(observer.observe(0, self.flit, True))
        self.assertIsNone(observer.observe(0, self.flit, True))
        self.assertIsNone(observer.observe(0, self.flit, True))
        self.assertEqual(observer.observe(0, self.flit, True), ("reserve", self.flit.key))
        self.assertEqual(observer.circle_count, 3)
        self.assertEqual(observer.observe(0, None, False), ("release", self.flit.key))
        self.assertEqual(observer.observed_slot, 11)


class BridgeTests(SimpleTestCase):
    def setUp(self):
        self.network = build_hird(16)
        self.bridge = next(b for b in self.network.bridges if b.child.ring_id.prefix == (0,))
        self.clock = SimClock(10, 0, 100)

    def fill(self, fifo):
        for txn in range(fifo.depth):
            fifo.entries.append((make_flit(self.network, 12, 13, txn=100 + txn), 0))
        fifo.accepted_at = 0

    def test_swap_rule_crosses_both_flits(self):
        up = make_flit(self.network, 0, 9, txn=1)
        down = make_flit(self.network, 12, 1, txn=2)
        child_lane, child_slot = register(self.bridge.child, self.bridge.child_stop)
        parent_lane, parent_slot = register(self.bridge.parent, self.bridge.parent_stop)
        child_lane.slots[child_slot] = up
        parent_lane.slots[parent_slot] = down
        self.fill(self.bridge.fifo_up)
        self.fill(self.bridge.fifo_down)
        self.bridge.cycle(self.network, self.clock, transfer_guarantee=False)
        self.assertIs(parent_lane.slots[parent_slot], up)
        self.assertIs(child_lane.slots[child_slot], down)
        self.assertEqual(self.network.stats.swaps, 1)

    def test_swap_rule_checks_every_lane(self):
        up = make_flit(self.network, 0, 9, txn=1)
        down = make_flit(self.network, 12, 1, txn=2)
        child_lane, child_slot = register(self.bridge.child, self.bridge.child_stop, Direction.CCW)
        parent_lane, parent_slot = register(self.bridge.parent, self.bridge.parent_stop, Direction.CCW, lane=1)
        child_lane.slots[child_slot] = up
        parent_lane.slots[parent_slot] = down
        self.fill(self.bridge.fifo_up)
        self.fill(self.bridge.fifo_down)
        self.bridge.cycle(self.network, self.clock, transfer_guarantee=False)
        self.assertIs(parent_lane.slots[parent_slot], up)
        self.assertIs(child_lane.slots[child_slot], down)
        self.assertEqual(self.network.stats.swaps, 1)

    def test_at_most_one_swap_per_cycle(self):
        ups = [make_flit(self.network, 0, 9, txn=t) for t in (1, 2)]
        downs = [make_flit(self.network, 12, 1, txn=t) for t in (3, 4)]
        cw_child, cw_child_slot = register(self.bridge.child, self.bridge.child_stop, Direction.CW)
        ccw_child, ccw_child_slot = register(self.bridge.child, self.bridge.child_stop, Direction.CCW)
        cw_parent, cw_parent_slot = register(self.bridge.parent, self.bridge.parent_stop, Direction.CW)
        ccw_parent, ccw_parent_slot = register(self.bridge.parent, self.bridge.parent_stop, Direction.CCW, lane=1)
        cw_child.slots[cw_child_slot], ccw_child.slots[ccw_child_slot] = ups
        cw_parent.slots[cw_parent_slot], ccw_parent.slots[ccw_parent_slot] = downs
        self.fill(self.bridge.fifo_up)
        self.fill(self.bridge.fifo_down)
        self.bridge.cycle(self.network, self.clock, transfer_guarantee=False)
        self.assertEqual(self.network.stats.swaps, 1)
        self.assertIs(cw_parent.slots[cw_parent_slot], ups[0])
        self.assertIs(cw_child.slots[cw_child_slot], downs[0])
        self.assertIs(ccw_child.slots[ccw_child_slot], ups[1])
        self.assertIs(ccw_parent.slots[ccw_parent_slot], downs[1])
        self.assertEqual((ups[1].ring_retries, downs[1].ring_retries), (1, 1))

    def test_fifo_head_takes_the_other_direction_when_blocked(self):
        flit = make_flit(self.network, 0, 9, txn=1)
        self.bridge.fifo_up.push(flit, 0)
        stop = self.bridge.parent_stop
        preferred = self.network.direction_from(self.bridge.parent, stop, 9)
        for lane in self.bridge.parent.lanes[preferred]:
            lane.slots[lane.slot_index(stop)] = make_flit(self.network, 12, 14, txn=50 + lane.index)
        self.bridge.cycle(self.network, self.clock, transfer_guarantee=False)
        self.assertEqual(len(self.bridge.fifo_up), 0)
        other = self.bridge.parent.lanes[1 - preferred][0]
        self.assertIs(other.slots[other.slot_index(stop)], flit)

    def test_reserved_full_fifo_still_drains(self):
        self.fill(self.bridge.fifo_up)
        stuck = (PacketId(self.network.nodes[2], 7), 0)
        self.bridge.fifo_up.reserved_for = stuck
        self.bridge.cycle(self.network, self.clock, transfer_guarantee=False)
        self.assertEqual(len(self.bridge.fifo_up), 0)
        self.assertEqual(self.bridge.fifo_up.reserved_for, stuck)

    def test_fifo_ports_follow_the_parent_lanes(self):
        self.assertEqual((self.bridge.fifo_up.ports, self.bridge.fifo_up.depth), (2, 2))
        self.assertEqual((self.bridge.fifo_down.ports, self.bridge.fifo_down.depth), (2, 8))

    def test_no_swap_when_only_one_side_needs_transfer(self):
        up = make_flit(self.network, 0, 9, txn=1)
        passing = make_flit(self.network, 12, 14, txn=2)
        child_lane, child_slot = register(self.bridge.child, self.bridge.child_stop)
        parent_lane, parent_slot = register(self.bridge.parent, self.bridge.parent_stop)
        child_lane.slots[child_slot] = up
        parent_lane.slots[parent_slot] = passing
        self.bridge.cycle(self.network, self.clock, transfer_guarantee=False)
        self.assertEqual(self.network.stats.swaps, 0)
        self.assertIs(parent_lane.slots[parent_slot], passing)
        self.assertIsNone(child_lane.slots[child_slot])
        self.assertEqual(self.network.stats.transfers_up, 1)

    def test_full_fifo_deflects_the_flit(self):
        up = make_flit(self.network, 0, 9, txn=1)
        child_lane, child_slot = register(self.bridge.child, self.bridge.child_stop)
        child_lane.slots[child_slot] = up
        self.fill(self.bridge.fifo_up)
        for lane in self.bridge.parent.lanes[Direction.CW] + self.bridge.parent.lanes[Direction.CCW]:
            lane.slots[lane.slot_index(self.bridge.parent_stop)] = make_flit(self.network, 12, 14, txn=50 + lane.index)
        self.bridge.cycle(self.network, self.clock, transfer_guarantee=False)
        self.assertIs(child_lane.slots[child_slot], up)
        self.assertEqual(up.ring_retries, 1)
        self.assertEqual(up.deflections, 1)
        self.assertEqual(self.network.stats.transfer_deflections_up, 1)

    def test_reserved_fifo_refuses_other_flits(self):
        up = make_flit(self.network, 0, 9, txn=1)
        child_lane, child_slot = register(self.bridge.child, self.bridge.child_stop)
        child_lane.slots[child_slot] = up
        self.bridge.fifo_up.reserved_for = (PacketId(self.network.nodes[2], 7), 0)
        self.bridge.cycle(self.network, self.clock, transfer_guarantee=False)
        self.assertIs(child_lane.slots[child_slot], up)
        self.assertEqual(up.ring_retries, 1)


class ThrottleTests(SimpleTestCase):
    def setUp(self):
        self.network = build_hird(16)
        self.routers = self.network.routers
        self.state = ThrottleState(threshold=5, latency=1)

    def throttled(self):
        return {r.index for r in self.routers if r.throttled}

    def test_no_starvation_no_throttle(self):
        injection_guarantee_cycle(self.state, self.routers, self.network.local_prefixes)
        self.assertEqual(self.throttled(), set())
        self.assertEqual(self.state.activations, 0)

    def test_starved_node_throttles_its_ring_then_the_network(self):
        self.routers[0].starve_counter = 6
        injection_guarantee_cycle(self.state, self.routers, self.network.local_prefixes)
        self.assertEqual(self.throttled(), {1, 2, 3})
        self.assertEqual(self.state.activations, 1)
        for _ in range(6):
            injection_guarantee_cycle(self.state, self.routers, self.network.local_prefixes)
        self.assertEqual(self.throttled(), set(range(1, 16)))
        self.routers[0].starve_counter = 0
        injection_guarantee_cycle(self.state, self.routers, self.network.local_prefixes)
        self.assertEqual(self.throttled(), set())
        self.assertEqual(self.state.activations, 1)

    def test_counter_reaching_the_threshold_is_starvation(self):
        self.routers[5].starve_counter = 4
        injection_guarantee_cycle(self.state, self.routers, self.network.local_prefixes)
        self.assertEqual(self.throttled(), set())
        self.routers[5].starve_counter = 5
        injection_guarantee_cycle(self.state, self.routers, self.network.local_prefixes)
        self.assertEqual(self.throttled(), {4, 6, 7})


class LatencyTests(SimpleTestCase):
    def deliver(self, network, flit, limit=200):
        clock = SimClock(0, 0, limit)
        network.enqueue(flit)
        while clock.cycle < limit:
            if flit in network.cycle(clock):
                return clock.cycle
            clock.cycle += 1
        raise AssertionError("flit was never delivered")

    def test_same_ring_one_hop(self):
        network = build_hird(16)
        self.assertEqual(self.deliver(network, make_flit(network, 0, 1)), 2)

    def test_cross_ring_route(self):
        network = build_hird(16)
        self.assertEqual(self.deliver(network, make_flit(network, 0, 4)), 8)
        self.assertEqual(network.stats.transfers_up, 1)
        self.assertEqual(network.stats.transfers_down, 1)


def hird_config(**overrides):
    values = dict(topology="hird", nodes=16, rate=0.1, cycles=2000, warmup=200, seed=1)
    values.update(overrides)
    return ExperimentConfig(**values)


class DrainTests(SimpleTestCase):
    def test_swap_rule_alone_drains_the_network(self):
        snapshots = 0
        for seed in range(1, 6):
            simulation = Simulation(hird_config(
                rate=0.8, injection_guarantee=False, transfer_guarantee=False, seed=seed, cycles=3000,
            ))
            limit = 10 * simulation.network.total_slots()
            for _ in range(300):
                simulation.advance()
            for _ in range(10):
                for _ in range(150):
                    simulation.advance()
                snapshot = copy.deepcopy(simulation)
                self.assertLessEqual(snapshot.drain(limit), limit)
                self.assertEqual(snapshot.network.in_flight(), 0)
                snapshots += 1
        self.assertEqual(snapshots, 50)


class SaturatedLoadTests(SimpleTestCase):
    def test_guarantees_keep_delivering_past_saturation(self):
        for nodes, rate in ((16, 0.4), (64, 0.2)):
            with self.subTest(nodes=nodes):
                simulation = Simulation(hird_config(
                    nodes=nodes, rate=rate, cycles=2000, warmup=200, throughput_window=800,
                ))
                result = simulation.run()
                self.assertGreater(result.throughput, 0.05)
                limit = 10 * simulation.network.total_slots()
                self.assertLessEqual(simulation.drain(limit), limit)


class LivelockTests(SimpleTestCase):
    def test_every_packet_is_delivered_under_heavy_load(self):
        for nodes, seed in ((16, 1), (16, 2), (64, 1)):
            with self.subTest(nodes=nodes, seed=seed):
                simulation = Simulation(hird_config(nodes=nodes, rate=0.4, cycles=1500, warmup=150, seed=seed))
                simulation.run()
                simulation.settle(40_000)
                self.assertEqual(simulation.outstanding(), 0)
                self.assertEqual(simulation.undelivered(), [])


class AdversarialTests(SimpleTestCase):
    cycles = 30_000
    warmup = 3_000
    window = 10_000

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.guarded = cls.run_pattern(injection_guarantee=True, transfer_guarantee=True)
        cls.unguarded = cls.run_pattern(injection_guarantee=False, transfer_guarantee=False)

    @classmethod
    def run_pattern(cls, **guarantees):
        return Simulation(hird_config(
            pattern="adversarial_starve", cycles=cls.cycles, warmup=cls.warmup,
            throughput_window=cls.window, **guarantees,
        )).run()

    def test_without_guarantees_ring_b_never_transfers(self):
        throughputs = self.unguarded.ring_throughputs
        self.assertEqual(throughputs["1"], 0.0)
        self.assertGreater(throughputs["0"], 0.0)
        self.assertGreater(throughputs["2"], 0.0)

    def test_without_guarantees_waits_grow_with_the_run(self):
        self.assertGreaterEqual(self.unguarded.retries_max, 1000)
        self.assertGreaterEqual(self.unguarded.head_wait_max, 0.9 * self.cycles)

    def test_guarantees_keep_every_source_ring_moving(self):
        throughputs = self.guarded.ring_throughputs
        for label in ("0", "1", "2"):
            self.assertGreater(throughputs[label], 0.0)
        self.assertEqual(throughputs["3"], 0.0)

    def test_guarantees_bound_retries_and_head_waits(self):
        self.assertLess(self.guarded.retries_max, 1000)
        self.assertLess(self.guarded.head_wait_max, 0.1 * self.cycles)


class ThresholdTests(SimpleTestCase):
    def test_retry_threshold_barely_moves_latency(self):
        latencies = [
            Simulation(hird_config(rate=0.15, cycles=6000, warmup=600, retry_threshold=t)).run().avg_latency
            for t in (1, 2, 4, 8, 16)
        ]
        self.assertLess((max(latencies) - min(latencies)) / min(latencies), 0.02)

    def test_injection_guarantee_stays_idle_at_moderate_load(self):
        for rate in (0.03, 0.1):
            simulation = Simulation(hird_config(rate=rate, cycles=6000, warmup=600, injection_threshold=10))
            simulation.run()
            self.assertEqual(simulation.network.stats.throttle_activations, 0)


class LowLoadTests(SimpleTestCase):
    def test_deflected_fraction_stays_small(self):
        result = Simulation(hird_config(rate=0.03, cycles=20_000, warmup=2_000)).run()
        self.assertGreater(result.delivered_flits, 0)
        self.assertLess(result.deflected_fraction, 0.03)

    def test_empty_network_only_advances_the_clock(self):
        simulation = Simulation(hird_config(rate=0.0))
        simulation.advance()
        self.assertEqual(simulation.clock.cycle, 1)
        self.assertEqual(simulation.network.stats.injected, 0)
        self.assertEqual(simulation.network.in_flight(), 0)
        self.assertIsInstance(simulation.network.stats, NetworkStats)
