"""Simulator for shared-secret authentication of the BB84 quantum channel."""

__version__ = "0.1.0"
