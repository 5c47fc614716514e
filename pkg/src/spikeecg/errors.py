"""Exception types shared across the package."""


class SpikeEcgError(Exception):
    """Base class for all package errors."""


class ConfigError(SpikeEcgError, ValueError):
    """Invalid configuration, shape mismatch or topology mismatch."""


class DataError(SpikeEcgError, ValueError):
    """Malformed input data or an impossible data request."""


class NumericError(SpikeEcgError, ArithmeticError):
    """A membrane potential became non-finite."""

    def __init__(self, layer: str, neuron: int):
        self.layer = layer
        self.neuron = neuron
        super().__init__(f"non-finite membrane potential in layer {layer!r} at neuron {neuron}")


class TopologyMismatch(ConfigError):
    """A saved model does not match the topology implied by a config."""


class EmptyDataError(DataError):
    """No beats available where at least one is required."""
