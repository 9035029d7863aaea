"""Planted partitions in random regular graphs: samplers, certificates,
belief-propagation stability, path statistics and low-degree calculations."""

__version__ = "0.1.0"
