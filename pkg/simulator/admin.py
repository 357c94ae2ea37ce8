from django.contrib import admin
from simulator.models import SimulationRun


@admin.register(SimulationRun)
class SimulationRunAdmin(admin.ModelAdmin):
    list_display = ['network', 'frequency', 'guarding', 'mode', 'fps', 'average_power_mw', 'created_at']
    list_filter = ['network', 'guarding', 'created_at']
    search_fields = ['network']
    readonly_fields = ['id', 'report']
