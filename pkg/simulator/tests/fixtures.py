from simulator.services.calibration_service import CalibrationService, bundled_calibration

TINY_CHAIN = {
    'network': 'tiny',
    'frequency': 204e6,
    'options': {'mode': 'full', 'seed': 3},
    'layers': [
        {'name': 'c1', 'kind': 'conv', 'in_channels': 2, 'in_height': 10, 'in_width': 20,
         'num_filters': 8, 'kernel': 3, 'padding': 1, 'weight_bits': 6, 'image_bits': 6,
         'guarding': True, 'output_exponent': 4,
         'weights': {'source': 'synthetic', 'zero_fraction': 0.3, 'seed': 1},
         'image': {'source': 'synthetic', 'zero_fraction': 0.5, 'seed': 2}},
        {'kind': 'relu'},
        {'kind': 'maxpool', 'window': 2},
        {'name': 'c2', 'kind': 'conv', 'in_channels': 8, 'in_height': 5, 'in_width': 10,
         'num_filters': 4, 'kernel': 3, 'padding': 1, 'weight_bits': 4, 'image_bits': 4,
         'guarding': True,
         'weights': {'source': 'synthetic', 'zero_fraction': 0.2, 'seed': 3},
         'image': {'source': 'chain'}},
    ],
}


def bundled_runs() -> CalibrationService:
    """One simulation of each bundled network, shared by the slow test cases."""
    return bundled_calibration()
