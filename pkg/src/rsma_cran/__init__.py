"""Rate-splitting downlink design for cloud radio access networks."""

__version__ = "0.1.0"
