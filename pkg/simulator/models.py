import uuid
from django.db import models


class SimulationRun(models.Model):
    GUARDING_CHOICES = [
        ('config', 'As configured'),
        ('on', 'On'),
        ('off', 'Off'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    network = models.CharField(max_length=100, db_index=True)
    frequency = models.FloatField()
    guarding = models.CharField(max_length=10, choices=GUARDING_CHOICES, default='config')
    mode = models.CharField(max_length=10, default='auto')
    seed = models.IntegerField(default=0)
    fps = models.FloatField()
    average_power_mw = models.FloatField()
    report = models.JSONField()
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['network', '-created_at'], name='simulator_run_network_idx'),
        ]

    def __str__(self):
        return f"{self.network} @ {self.frequency / 1e6:.0f} MHz - {self.fps:.1f} fps"
