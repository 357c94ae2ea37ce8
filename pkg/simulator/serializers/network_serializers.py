from rest_framework import serializers

from simulator.models import SimulationRun

SOURCE_CHOICES = ['synthetic', 'file', 'chain']
DISTRIBUTION_CHOICES = ['uniform', 'geometric']
KIND_CHOICES = ['conv', 'relu', 'maxpool']
MODE_CHOICES = ['auto', 'full', 'sampled']


class PairField(serializers.ListField):
    """Accepts `n` or `[h, w]`."""

    def __init__(self, **kwargs):
        super().__init__(child=serializers.IntegerField(min_value=1), min_length=2, max_length=2, **kwargs)

    def to_internal_value(self, data):
        if isinstance(data, int) and not isinstance(data, bool):
            data = [data, data]
        return super().to_internal_value(data)


class TensorSourceSerializer(serializers.Serializer):
    source = serializers.ChoiceField(choices=SOURCE_CHOICES)
    zero_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)
    distribution = serializers.ChoiceField(choices=DISTRIBUTION_CHOICES, default='uniform')
    seed = serializers.IntegerField(min_value=0, default=0)
    exponent = serializers.IntegerField(min_value=-128, max_value=127, default=0)
    path = serializers.CharField(required=False, allow_blank=False)

    def validate(self, attrs):
        if attrs['source'] == 'file' and not attrs.get('path'):
            raise serializers.ValidationError({'path': 'A file source needs a path'})
        return attrs


class LayerSerializer(serializers.Serializer):
    name = serializers.CharField(required=False, allow_blank=True, default='')
    kind = serializers.ChoiceField(choices=KIND_CHOICES)
    in_channels = serializers.IntegerField(min_value=1, required=False)
    in_height = serializers.IntegerField(min_value=1, required=False)
    in_width = serializers.IntegerField(min_value=1, required=False)
    num_filters = serializers.IntegerField(min_value=1, required=False)
    kernel = PairField(required=False)
    stride_h = serializers.IntegerField(min_value=1, max_value=4, default=1)
    stride_v = serializers.IntegerField(min_value=1, default=1)
    padding = serializers.IntegerField(min_value=0, default=0)
    groups = serializers.IntegerField(min_value=1, default=1)
    window = PairField(required=False)
    stride = PairField(required=False)
    weight_bits = serializers.IntegerField(min_value=1, max_value=16, default=16)
    image_bits = serializers.IntegerField(min_value=1, max_value=16, default=16)
    output_bits = serializers.IntegerField(min_value=1, max_value=16, required=False, allow_null=True)
    output_exponent = serializers.IntegerField(required=False, allow_null=True)
    guarding = serializers.BooleanField(default=False)
    voltage = serializers.FloatField(min_value=0.55, max_value=1.1, required=False, allow_null=True)
    image = TensorSourceSerializer(required=False)
    weights = TensorSourceSerializer(required=False)

    def validate(self, attrs):
        if attrs['kind'] == 'conv':
            missing = [f for f in ('num_filters', 'kernel', 'image', 'weights') if f not in attrs]
            if missing:
                raise serializers.ValidationError({f: 'Required for conv layers' for f in missing})
            if attrs['weights']['source'] == 'chain':
                raise serializers.ValidationError({'weights': 'Weights cannot be chained'})
        if attrs['kind'] == 'maxpool' and 'window' not in attrs:
            raise serializers.ValidationError({'window': 'Required for maxpool layers'})
        return attrs


class RunOptionsSerializer(serializers.Serializer):
    mode = serializers.ChoiceField(choices=MODE_CHOICES, default='auto')
    sample_groups = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    seed = serializers.IntegerField(min_value=0, default=0)


class NetworkConfigSerializer(serializers.Serializer):
    network = serializers.CharField()
    frequency = serializers.FloatField(min_value=12e6, max_value=204e6, default=204e6)
    options = RunOptionsSerializer(required=False)
    layers = LayerSerializer(many=True, allow_empty=True)


class RunRequestSerializer(serializers.Serializer):
    config = serializers.CharField(help_text='Bundled config name, e.g. alexnet')
    frequency = serializers.FloatField(min_value=12e6, max_value=204e6, required=False)
    guarding = serializers.ChoiceField(choices=['on', 'off'], required=False)
    mode = serializers.ChoiceField(choices=MODE_CHOICES, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)


class SimulationRunSerializer(serializers.ModelSerializer):
    id = serializers.UUIDField()
    averagePowerMw = serializers.FloatField(source='average_power_mw')
    createdAt = serializers.DateTimeField(source='created_at')

    class Meta:
        model = SimulationRun
        fields = ['id', 'network', 'frequency', 'guarding', 'fps', 'averagePowerMw', 'createdAt']


class SimulationRunDetailSerializer(SimulationRunSerializer):

    class Meta(SimulationRunSerializer.Meta):
        fields = SimulationRunSerializer.Meta.fields + ['report']


class PeakPerformanceSerializer(serializers.Serializer):
    frequency = serializers.FloatField()
    gops = serializers.FloatField()
