from django.contrib import admin

from .models import ExperimentRun, ResultRecord


class ResultRecordInline(admin.TabularInline):
    model = ResultRecord
    fields = ("rate", "avg_latency", "p95_latency", "max_latency", "throughput", "saturated")
    readonly_fields = fields
    extra = 0


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("config_hash", "topology", "nodes", "pattern", "created_at")
    list_filter = ("topology", "pattern")
    search_fields = ("config_hash",)
    inlines = [ResultRecordInline]


@admin.register(ResultRecord)
class ResultRecordAdmin(admin.ModelAdmin):
    list_display = ("run", "rate", "avg_latency", "throughput", "saturated")
    list_filter = ("saturated",)
