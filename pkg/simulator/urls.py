from django.urls import path
from simulator.views import (
    SimulationRunsView,
    SimulationRunDetailView,
    PeakPerformanceView,
)

urlpatterns = [
    path('runs', SimulationRunsView.as_view(), name='runs'),
    path('runs/<uuid:id>', SimulationRunDetailView.as_view(), name='run-detail'),
    path('peak-performance', PeakPerformanceView.as_view(), name='peak-performance'),
]
