# Generated by Django 5.2.9 on 2026-10-18 09:12

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('network', models.CharField(db_index=True, max_length=100)),
                ('frequency', models.FloatField()),
                ('guarding', models.CharField(choices=[('config', 'As configured'), ('on', 'On'), ('off', 'Off')], default='config', max_length=10)),
                ('mode', models.CharField(default='auto', max_length=10)),
                ('seed', models.IntegerField(default=0)),
                ('fps', models.FloatField()),
                ('average_power_mw', models.FloatField()),
                ('report', models.JSONField()),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['network', '-created_at'], name='simulator_run_network_idx')],
            },
        ),
    ]
