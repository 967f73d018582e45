"""Dilute Curie-Weiss model on directed Erdos-Renyi graphs: exact moments, enumeration and CLT experiments."""

__version__ = "0.1.0"
