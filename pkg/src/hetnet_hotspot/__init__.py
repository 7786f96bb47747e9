"""Static and flow-level analysis of a macrocell with a hotspot-serving small cell."""

__version__ = "0.1.0"
