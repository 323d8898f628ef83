"""Simulate, train and compare dissipative QNNs and QAOA circuits on noisy gate-model devices."""

__version__ = "0.1.0"
