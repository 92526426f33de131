from django.db import models


class ExperimentRun(models.Model):
    class Topology(models.TextChoices):
        SINGLE_RING = "single_ring", "Single ring"
        HIRD = "hird", "Hierarchical rings"
        MESH_CHIPPER = "mesh_chipper", "Mesh (CHIPPER)"
        MESH_MINBD = "mesh_minbd", "Mesh (MinBD)"

    config_hash = models.CharField(max_length=12)
    topology = models.CharField(max_length=20, choices=Topology.choices)
    nodes = models.PositiveIntegerField()
    pattern = models.CharField(max_length=40)
    config_text = models.TextField()
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        indexes = [models.Index(fields=["config_hash"], name="simulator_run_hash_idx")]
        ordering = ["-created_at"]

    def __str__(self):
        return f"{self.topology} x{self.nodes} ({self.config_hash})"


class ResultRecord(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="results")
    rate = models.FloatField()
    avg_latency = models.FloatField(null=True, blank=True)
    p95_latency = models.PositiveIntegerField(null=True, blank=True)
    max_latency = models.PositiveIntegerField(null=True, blank=True)
    throughput = models.FloatField(default=0.0)
    saturated = models.BooleanField(default=False)
    row = models.JSONField()

    class Meta:
        ordering = ["rate"]
        unique_together = ("run", "rate")

    def __str__(self):
        return f"{self.run.config_hash} @ {self.rate}"
