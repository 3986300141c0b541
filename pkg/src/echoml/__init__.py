"""Neural-network readout of simulated spin-echo experiments."""

__version__ = "0.1.0"
