# Generated manually for initial schema
from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                ("config_hash", models.CharField(max_length=12)),
                (
                    "topology",
                    models.CharField(
                        choices=[
                            ("single_ring", "Single ring"),
                            ("hird", "Hierarchical rings"),
                            ("mesh_chipper", "Mesh (CHIPPER)"),
                            ("mesh_minbd", "Mesh (MinBD)"),
                        ],
                        max_length=20,
                    ),
                ),
                ("nodes", models.PositiveIntegerField()),
                ("pattern", models.CharField(max_length=40)),
                ("config_text", models.TextField()),
                ("created_at", models.DateTimeField(auto_now_add=True)),
            ],
            options={
                "ordering": ["-created_at"],
                "indexes": [models.Index(fields=["config_hash"], name="simulator_run_hash_idx")],
            },
        ),
        migrations.CreateModel(
            name="ResultRecord",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                ("rate", models.FloatField()),
                ("avg_latency", models.FloatField(blank=True, null=True)),
                ("p95_latency", models.PositiveIntegerField(blank=True, null=True)),
                ("max_latency", models.PositiveIntegerField(blank=True, null=True)),
                ("throughput", models.FloatField(default=0.0)),
                ("saturated", models.BooleanField(default=False)),
                ("row", models.JSONField()),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="results",
                        to="simulator.experimentrun",
                    ),
                ),
            ],
            options={
                "ordering": ["rate"],
                "unique_together": {("run", "rate")},
            },
        ),
    ]
