from django.test import TestCase
from django.urls import reverse

from simulator.config import ExperimentConfig
from simulator.services import run, run_csv_text, save_results


class RunViewTests(TestCase):
    @classmethod
    def setUpTestData(cls):
        config = ExperimentConfig(topology="single_ring", nodes=8, rate_sweep="0.05:0.1:0.05", cycles=800, seed=1)
        cls.record = save_results(config, run(config))

    def test_run_list(self):
        response = self.client.get(reverse("run_list"))
        self.assertEqual(response.status_code, 200)
        (entry,) = response.json()["runs"]
        self.assertEqual(entry["config_hash"], self.record.config_hash)
        self.assertEqual(entry["rates"], [0.05, 0.1])
        self.assertEqual(entry["csv"], reverse("run_csv", args=[self.record.pk]))

    def test_run_csv(self):
        response = self.client.get(reverse("run_csv", args=[self.record.pk]))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response["Content-Type"], "text/csv; charset=utf-8")
        self.assertEqual(response.content.decode("utf-8"), run_csv_text(self.record))

    def test_missing_run(self):
        self.assertEqual(self.client.get(reverse("run_csv", args=[999])).status_code, 404)

    def test_run_list_filters_by_topology(self):
        response = self.client.get(reverse("run_list"), {"topology": "hird"})
        self.assertEqual(response.json()["runs"], [])
        response = self.client.get(reverse("run_list"), {"topology": "single_ring", "limit": "1"})
        self.assertEqual(len(response.json()["runs"]), 1)

    def test_bad_query_is_reported(self):
        for query, message in (
            ({"limit": "ten"}, "whole number"),
            ({"limit": "0"}, "between 1 and 100"),
            ({"topology": "torus"}, "Unknown topology"),
        ):
            response = self.client.get(reverse("run_list"), query)
            self.assertEqual(response.status_code, 400)
            self.assertIn(message, response.json()["error"])
