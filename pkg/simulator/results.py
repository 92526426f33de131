"""Result rows and their CSV form. Importable without Django so sweep workers stay light."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, fields

from .engine import Simulation

logger = logging.getLogger(__name__)

CSV_SCHEMA = "# noc-sim csv v1"


@dataclass
class ResultRow:
    config_hash: str
    topology: str
    nodes: int
    pattern: str
    rate: float
    seed: int
    avg_latency: float | None
    p95_latency: int | None
    max_latency: int | None
    avg_net_latency: float | None
    p95_net_latency: int | None
    max_net_latency: int | None
    avg_packet_latency: float | None
    throughput: float
    ring_throughput: dict
    deflections: int
    deflections_per_flit: float
    deflections_per_hop: float
    deflected_fraction: float
    transfer_deflection_rate_up: float
    transfer_deflection_rate_down: float
    retries_avg: float
    retries_max: int
    fifo_wait_avg: float | None
    fifo_wait_max: int | None
    head_wait_max: int | None
    swaps: int
    reservations: int
    throttle_activations: int
    redirections: int
    side_residence_max: int
    drops: int
    retransmits: int
    delivered_packets: int
    undelivered: int
    saturated: bool
    runtime_cycles: int

    def csv_fields(self):
        return {f.name: format_cell(getattr(self, f.name)) for f in fields(self)}


CSV_COLUMNS = tuple(f.name for f in fields(ResultRow))


def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, dict):
        return ";".join(f"{label}:{rate:.6g}" for label, rate in sorted(value.items()))
    return str(value)


def _rate(deflected, transferred):
    attempts = deflected + transferred
    return deflected / attempts if attempts else 0.0


def simulate_row(config):
    simulation = Simulation(config)
    result = simulation.run()
    simulation.verify(result)
    stats = simulation.network.stats
    row = ResultRow(
        config_hash=config.config_hash(),
        topology=config.topology,
        nodes=config.nodes,
        pattern=config.pattern,
        rate=config.rate,
        seed=config.seed,
        avg_latency=result.avg_latency,
        p95_latency=result.p95_latency,
        max_latency=result.max_latency,
        avg_net_latency=result.avg_net_latency,
        p95_net_latency=result.p95_net_latency,
        max_net_latency=result.max_net_latency,
        avg_packet_latency=result.avg_packet_latency,
        throughput=result.throughput,
        ring_throughput=result.ring_throughputs,
        deflections=result.deflections,
        deflections_per_flit=result.deflections_per_flit,
        deflections_per_hop=result.deflections_per_hop,
        deflected_fraction=result.deflected_fraction,
        transfer_deflection_rate_up=_rate(stats.transfer_deflections_up, stats.transfers_up),
        transfer_deflection_rate_down=_rate(stats.transfer_deflections_down, stats.transfers_down),
        retries_avg=result.retries_avg,
        retries_max=result.retries_max,
        fifo_wait_avg=result.fifo_wait_avg,
        fifo_wait_max=result.fifo_wait_max,
        head_wait_max=result.head_wait_max,
        swaps=stats.swaps,
        reservations=stats.reservations,
        throttle_activations=stats.throttle_activations,
        redirections=stats.redirections,
        side_residence_max=stats.side_residence_max,
        drops=result.drops,
        retransmits=result.retransmits,
        delivered_packets=result.delivered_packets,
        undelivered=result.undelivered,
        saturated=result.saturated,
        runtime_cycles=simulation.clock.cycle,
    )
    logger.debug("Finished %s at rate %s", row.config_hash, row.rate)
    return row


def sort_rows(rows):
    return sorted(rows, key=lambda row: (row.config_hash, row.rate))


def render_csv(rows):
    """CSV text for ResultRows or for already-formatted column mappings, in the given order."""
    buffer = io.StringIO()
    buffer.write(CSV_SCHEMA + "\n")
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.csv_fields() if isinstance(row, ResultRow) else row)
    return buffer.getvalue()
