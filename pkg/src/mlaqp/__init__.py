"""Learned approximate answers to aggregate SQL queries."""

__version__ = "0.1.0"
