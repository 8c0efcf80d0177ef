"""Discrete-event simulator for a two-tier super-peer grid: brokering,
resource discovery, self-healing and checkpoint policy."""

__version__ = "0.1.0"
