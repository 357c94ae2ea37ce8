from .simulation_runs_view import SimulationRunsView
from .simulation_run_detail_view import SimulationRunDetailView
from .peak_performance_view import PeakPerformanceView

__all__ = [
    'SimulationRunsView',
    'SimulationRunDetailView',
    'PeakPerformanceView',
]
