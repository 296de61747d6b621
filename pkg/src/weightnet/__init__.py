"""Weighted network growth: preferential attachment plus multiplicative link weights."""

__version__ = "0.1.0"
FORMAT_VERSION = "1"
