import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.conf import settings
from django.test import TestCase, override_settings

from simulator.models import ExperimentRun
from simulator.results import CSV_SCHEMA

BASE_ARGS = ["--topology", "single_ring", "--nodes", "8", "--cycles", "800", "--rate", "0.05"]


@override_settings(NOC_SEED=None)
class SimulateCommandTests(TestCase):
    def call(self, *args):
        out, err = StringIO(), StringIO()
        call_command("simulate", *args, stdout=out, stderr=err)
        return out.getvalue(), err.getvalue()

    def test_csv_on_stdout(self):
        out, _ = self.call(*BASE_ARGS)
        lines = out.splitlines()
        self.assertEqual(lines[0], CSV_SCHEMA)
        self.assertEqual(len(lines), 3)
        self.assertIn(",single_ring,8,uniform_random,0.05,0,", lines[2])

    def test_same_flags_same_output(self):
        self.assertEqual(self.call(*BASE_ARGS)[0], self.call(*BASE_ARGS)[0])

    def test_write_to_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "rows.csv"
            out, _ = self.call(*BASE_ARGS, "--rate-sweep", "0.02:0.04:0.02", "--out", str(path))
            self.assertIn("Wrote 2 rows", out)
            self.assertEqual(len(path.read_text(encoding="utf-8").splitlines()), 4)

    def test_config_file_and_set(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "exp.conf"
            path.write_text("[network]\ntopology = hird\n[run]\ncycles = 600\n", encoding="utf-8")
            out, _ = self.call("--config", str(path), "--set", "bridges=4", "--set", "seed=2",
                               "--guarantees", "off")
        self.assertIn(",hird,16,uniform_random,0.1,2,", out.splitlines()[2])

    def test_invalid_config_exits_with_two(self):
        for args in (["--topology", "hird", "--nodes", "15"], ["--set", "colour=blue"],
                     ["--config", "/nonexistent/exp.conf"]):
            with self.assertRaises(CommandError) as ctx:
                self.call(*args)
            self.assertEqual(ctx.exception.returncode, 2)

    def test_shipped_adversarial_config(self):
        path = Path(settings.BASE_DIR) / "experiments" / "adversarial.conf"
        out, _ = self.call("--config", str(path), "--guarantees", "off", "--set", "cycles=400",
                           "--set", "warmup=40", "--set", "throughput_window=200")
        self.assertIn(",hird,16,adversarial_starve,", out.splitlines()[2])

    def test_non_ascii_trace_exits_with_two(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "trace.txt"
            path.write_bytes(b"0 0 1 1\n\xff\n")
            with self.assertRaises(CommandError) as ctx:
                self.call(*BASE_ARGS, "--set", "pattern=trace", "--set", f"trace_path={path}")
        self.assertEqual(ctx.exception.returncode, 2)

    def test_save(self):
        _, err = self.call(*BASE_ARGS, "--save")
        record = ExperimentRun.objects.get()
        self.assertIn(f"Saved run {record.pk}", err)
        self.assertEqual(record.results.count(), 1)
