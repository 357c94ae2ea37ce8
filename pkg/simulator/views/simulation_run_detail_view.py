from rest_framework.views import APIView
from rest_framework.response import Response
from rest_framework import status
from drf_spectacular.utils import extend_schema, OpenApiParameter
from simulator.models import SimulationRun
from simulator.serializers.network_serializers import SimulationRunDetailSerializer


class SimulationRunDetailView(APIView):

    @extend_schema(
        summary="Get a simulation run",
        description="Returns a stored run with its full machine report",
        parameters=[
            OpenApiParameter(
                name='id',
                type=str,
                location=OpenApiParameter.PATH,
                description='UUID of the run',
                required=True
            ),
        ],
        responses={
            200: SimulationRunDetailSerializer,
            404: {'description': 'Run not found'},
        },
    )
    def get(self, request, id):
        try:
            run = SimulationRun.objects.get(id=id)
        except SimulationRun.DoesNotExist:
            return Response(
                {'error': 'Simulation run not found'},
                status=status.HTTP_404_NOT_FOUND
            )

        serializer = SimulationRunDetailSerializer(run)
        return Response(serializer.data, status=status.HTTP_200_OK)
