from rest_framework.views import APIView
from rest_framework.response import Response
from rest_framework import status
from drf_spectacular.utils import extend_schema, OpenApiParameter
from simulator.exceptions import SimulatorError
from simulator.models import SimulationRun
from simulator.serializers.network_serializers import (
    RunRequestSerializer,
    SimulationRunDetailSerializer,
    SimulationRunSerializer,
)
from simulator.services.config_service import apply_overrides, bundled_configs, load_config
from simulator.services.simulation_service import SimulationService, store_run


class SimulationRunsView(APIView):

    @extend_schema(
        summary="List simulation runs",
        description="Returns stored simulation runs, newest first",
        parameters=[
            OpenApiParameter(
                name='network',
                type=str,
                location=OpenApiParameter.QUERY,
                description='Only runs of this network',
                required=False,
            ),
            OpenApiParameter(
                name='limit',
                type=int,
                location=OpenApiParameter.QUERY,
                description='Number of runs to return',
                required=False,
                default=50
            ),
        ],
        responses={200: SimulationRunSerializer(many=True)},
    )
    def get(self, request):
        try:
            limit = int(request.query_params.get('limit', 50))
        except ValueError:
            return Response({'error': 'limit must be an integer'}, status=status.HTTP_400_BAD_REQUEST)

        runs = SimulationRun.objects.all()
        network = request.query_params.get('network')
        if network:
            runs = runs.filter(network=network)

        serializer = SimulationRunSerializer(runs[:limit], many=True)
        return Response(serializer.data, status=status.HTTP_200_OK)

    @extend_schema(
        summary="Run a bundled network",
        description="Simulates a bundled network config and stores the report",
        request=RunRequestSerializer,
        responses={
            201: SimulationRunDetailSerializer,
            400: {'description': 'Invalid request or simulation error'},
        },
    )
    def post(self, request):
        request_serializer = RunRequestSerializer(data=request.data)
        if not request_serializer.is_valid():
            return Response({'error': request_serializer.errors}, status=status.HTTP_400_BAD_REQUEST)
        params = request_serializer.validated_data

        if params['config'] not in bundled_configs():
            return Response(
                {'error': f"Unknown bundled config '{params['config']}'"},
                status=status.HTTP_400_BAD_REQUEST
            )

        guarding = params.get('guarding')
        try:
            config = apply_overrides(
                load_config(params['config']),
                frequency=params.get('frequency'),
                guarding=None if guarding is None else guarding == 'on',
                seed=params.get('seed'),
                mode=params.get('mode'),
            )
            report = SimulationService().run_network(config)
        except SimulatorError as e:
            return Response({'error': str(e)}, status=status.HTTP_400_BAD_REQUEST)

        run = store_run(report, guarding=guarding or 'config', mode=config.options.mode,
                        seed=config.options.seed)
        serializer = SimulationRunDetailSerializer(run)
        return Response(serializer.data, status=status.HTTP_201_CREATED)
