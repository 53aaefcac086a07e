"""Transmit antenna muting laboratory for MU-MIMO downlink."""

__version__ = "0.1.0"
