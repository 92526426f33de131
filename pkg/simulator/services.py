import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings
from django.db import transaction

from .models import ExperimentRun, ResultRecord
from .results import render_csv, simulate_row, sort_rows

logger = logging.getLogger(__name__)

RUN_LIST_LIMIT = 100


@dataclass
class SweepResult:
    rows: list
    saturation_rate: float | None


def _resolve_workers(workers):
    return max(1, workers if workers is not None else settings.NOC_WORKERS)


def run_sweep(configs, workers=None):
    """Run independent configs, serially or on a process pool; rows come back in input order."""
    workers = _resolve_workers(workers)
    if workers == 1 or len(configs) < 2:
        return [simulate_row(config) for config in configs]
    with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as executor:
        return list(executor.map(simulate_row, configs))


def saturation_sweep(config, rates=None, workers=None):
    rates = list(rates if rates is not None else config.rates())
    if any(b <= a for a, b in zip(rates, rates[1:])):
        raise ValueError("Sweep rates must be strictly increasing.")
    workers = _resolve_workers(workers)
    if workers == 1:
        rows = []
        for rate in rates:
            row = simulate_row(config.with_rate(rate))
            rows.append(row)
            if row.saturated:
                break
    else:
        # Parallel runs cover every rate; cut after the first saturated one like the serial loop.
        rows = run_sweep([config.with_rate(rate) for rate in rates], workers)
        for index, row in enumerate(rows):
            if row.saturated:
                rows = rows[: index + 1]
                break
    saturation_rate = rows[-1].rate if rows and rows[-1].saturated else None
    if saturation_rate is not None:
        logger.warning("Config %s saturates at rate %s", config.config_hash(), saturation_rate)
    return SweepResult(rows, saturation_rate)


def run(config, workers=None):
    logger.info("Running %s on %d-node %s, %s traffic, rates %s",
                config.config_hash(), config.nodes, config.topology, config.pattern, config.rates())
    if config.rate_sweep:
        rows = saturation_sweep(config, workers=workers).rows
    else:
        rows = [simulate_row(config)]
    for row in rows:
        logger.info("Rate %s: avg latency %s, throughput %.4f, saturated %s",
                    row.rate, row.avg_latency, row.throughput, row.saturated)
    return sort_rows(rows)


def emit_csv(rows, path):
    Path(path).write_text(render_csv(rows), encoding="utf-8", newline="\n")


@transaction.atomic
def save_results(config, rows):
    run_record = ExperimentRun.objects.create(
        config_hash=config.config_hash(),
        topology=config.topology,
        nodes=config.nodes,
        pattern=config.pattern,
        config_text=config.to_text(include_rate=False),
    )
    ResultRecord.objects.bulk_create([
        ResultRecord(
            run=run_record,
            rate=row.rate,
            avg_latency=row.avg_latency,
            p95_latency=row.p95_latency,
            max_latency=row.max_latency,
            throughput=row.throughput,
            saturated=row.saturated,
            row=row.csv_fields(),
        )
        for row in rows
    ])
    return run_record


def run_csv_text(run_record):
    return render_csv(record.row for record in run_record.results.order_by("rate"))


def list_runs(topology=None, limit=None):
    """Saved runs, newest first, optionally filtered by topology."""
    runs = ExperimentRun.objects.prefetch_related("results")
    if topology:
        if topology not in ExperimentRun.Topology.values:
            raise ValueError(f"Unknown topology {topology!r}.")
        runs = runs.filter(topology=topology)
    if limit is None or limit == "":
        return runs[:RUN_LIST_LIMIT]
    try:
        count = int(limit, 10)
    except ValueError:
        raise ValueError(f"limit must be a whole number, got {limit!r}.") from None
    if not 1 <= count <= RUN_LIST_LIMIT:
        raise ValueError(f"limit must be between 1 and {RUN_LIST_LIMIT}.")
    return runs[:count]
