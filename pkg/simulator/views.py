from django.http import HttpResponse, JsonResponse
from django.shortcuts import get_object_or_404
from django.urls import reverse

from .models import ExperimentRun
from .services import list_runs, run_csv_text


def run_list(request):
    try:
        runs = list_runs(topology=request.GET.get("topology"), limit=request.GET.get("limit"))
    except ValueError as exc:
        return JsonResponse({"error": str(exc)}, status=400)
    payload = [
        {
            "id": run.pk,
            "config_hash": run.config_hash,
            "topology": run.topology,
            "nodes": run.nodes,
            "pattern": run.pattern,
            "created_at": run.created_at.isoformat(),
            "rates": [record.rate for record in run.results.all()],
            "saturated_at": next((r.rate for r in run.results.all() if r.saturated), None),
            "csv": reverse("run_csv", args=[run.pk]),
        }
        for run in runs
    ]
    return JsonResponse({"runs": payload})


def run_csv(request, run_id):
    run = get_object_or_404(ExperimentRun, pk=run_id)
    response = HttpResponse(run_csv_text(run), content_type="text/csv; charset=utf-8")
    response["Content-Disposition"] = f'attachment; filename="{run.config_hash}.csv"'
    return response
