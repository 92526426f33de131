from django.core.management.base import BaseCommand, CommandError

from simulator.config import GUARANTEE_MODES, parse_config
from simulator.core import ConfigError, SimulationError
from simulator.forms import PATTERNS, TOPOLOGIES
from simulator.results import render_csv
from simulator.services import emit_csv, run, save_results
from simulator.traffic import TraceError


def _key_value(text):
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ValueError(text)
    return key.strip(), value.strip()


class Command(BaseCommand):
    help = "Run a network-on-chip experiment (or a rate sweep) and write the results as CSV."

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Experiment config file (key = value).")
        parser.add_argument("--topology", choices=TOPOLOGIES)
        parser.add_argument("--nodes", type=int)
        parser.add_argument("--pattern", choices=PATTERNS)
        parser.add_argument("--rate", type=float)
        parser.add_argument("--rate-sweep", dest="rate_sweep", metavar="START:STOP:STEP")
        parser.add_argument("--cycles", type=int)
        parser.add_argument("--warmup", help="Warmup cycles or 'auto' (10%% of --cycles).")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--guarantees", choices=list(GUARANTEE_MODES))
        parser.add_argument("--strict-chipper", dest="strict_chipper", action="store_true", default=None)
        parser.add_argument("--set", dest="set_values", action="append", type=_key_value, default=[],
                            metavar="KEY=VALUE", help="Override any config key; repeatable.")
        parser.add_argument("--out", help="CSV output path; stdout when omitted.")
        parser.add_argument("--workers", type=int, help="Worker processes for rate sweeps.")
        parser.add_argument("--save", action="store_true", help="Store the results in the database.")

    def handle(self, *args, **options):
        overrides = dict(options["set_values"] or [])
        for key in ("topology", "nodes", "pattern", "rate", "rate_sweep", "cycles", "warmup", "seed",
                    "guarantees", "strict_chipper"):
            if options[key] is not None:
                overrides[key] = options[key]
        try:
            config = parse_config(path=options["config"], overrides=overrides)
            rows = run(config, workers=options["workers"])
        except (ConfigError, TraceError) as exc:
            raise CommandError(f"Invalid configuration: {exc}", returncode=2) from exc
        except SimulationError as exc:
            raise CommandError(f"Simulation failed: {exc}", returncode=3) from exc

        if options["out"]:
            emit_csv(rows, options["out"])
            self.stdout.write(self.style.SUCCESS(f"Wrote {len(rows)} rows to {options['out']}"))
        else:
            self.stdout.write(render_csv(rows), ending="")
        if options["save"]:
            record = save_results(config, rows)
            self.stderr.write(f"Saved run {record.pk} ({record.config_hash})")
