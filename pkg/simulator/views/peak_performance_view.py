from django.conf import settings
from rest_framework.views import APIView
from rest_framework.response import Response
from rest_framework import status
from drf_spectacular.utils import extend_schema, OpenApiParameter
from simulator.exceptions import SimulatorError
from simulator.serializers.network_serializers import PeakPerformanceSerializer
from simulator.services.energymodel import peak_performance


class PeakPerformanceView(APIView):

    @extend_schema(
        summary="Peak performance",
        description="Peak GOPS of the 16x16 MAC array at a clock frequency",
        parameters=[
            OpenApiParameter(
                name='frequency',
                type=float,
                location=OpenApiParameter.QUERY,
                description='Clock frequency in Hz',
                required=False,
            ),
        ],
        responses={
            200: PeakPerformanceSerializer,
            400: {'description': 'Invalid frequency'},
        },
    )
    def get(self, request):
        try:
            frequency = float(request.query_params.get('frequency', settings.SIMULATOR['FREQUENCY_HZ']))
            gops = peak_performance(frequency)
        except ValueError:
            return Response({'error': 'frequency must be a number'}, status=status.HTTP_400_BAD_REQUEST)
        except SimulatorError as e:
            return Response({'error': str(e)}, status=status.HTTP_400_BAD_REQUEST)

        serializer = PeakPerformanceSerializer({'frequency': frequency, 'gops': gops})
        return Response(serializer.data, status=status.HTTP_200_OK)
