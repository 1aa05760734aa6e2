"""Cross-entropy benchmark for monitored trapped-ion circuits, with a
GRU-enhanced estimator and an experiment CLI."""

__version__ = "0.1.0"
