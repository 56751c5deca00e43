"""Cluster-statistics confidence metrics and post-selection for BP+LSD decoding."""

__version__ = "0.1.0"
