"""Failure-trace analysis for online services: extraction, reliability statistics, simulation."""

__version__ = "0.1.0"
