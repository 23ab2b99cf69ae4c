"""Compile, simulate and validate time-division-multiplexed ion-trap electrode voltages."""

__version__ = "0.1.0"
