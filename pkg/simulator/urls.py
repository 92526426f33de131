from django.urls import path

from . import views

urlpatterns = [
    path("", views.run_list, name="run_list"),
    path("runs/<int:run_id>/results.csv", views.run_csv, name="run_csv"),
]
