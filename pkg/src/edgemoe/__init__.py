"""Simulator and optimization testbed for distributed mixture-of-experts
inference with adaptive reasoning depth over a mobile edge network."""

__version__ = "0.1.0"
