class SimulatorError(Exception):
    """Base class for every error raised by the simulator services."""


class AccumulatorOverflow(SimulatorError):
    pass


class ShapeError(SimulatorError):
    pass


class ExponentError(SimulatorError):
    pass


class AccumulatorBudgetError(SimulatorError):

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class CapacityError(SimulatorError):
    pass


class CorruptStream(SimulatorError):
    pass


class RangeError(SimulatorError):
    pass


class FitError(SimulatorError):

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class ParseError(SimulatorError):

    def __init__(self, message, line=None, field=None):
        location = []
        if line is not None:
            location.append(f'line {line}')
        if field:
            location.append(f'field {field}')
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.line = line
        self.field = field


class ShapeChainError(SimulatorError):

    def __init__(self, producer, consumer, detail):
        super().__init__(
            f"Layer '{producer}' output does not feed layer '{consumer}': {detail}"
        )
        self.producer = producer
        self.consumer = consumer


class LayerError(SimulatorError):

    def __init__(self, layer_index, layer_name, cause):
        super().__init__(f'Layer {layer_index} ({layer_name}): {cause}')
        self.layer_index = layer_index
        self.layer_name = layer_name
        self.cause = cause
