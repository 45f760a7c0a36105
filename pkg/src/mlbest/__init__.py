"""Blind ML estimation of power-grid states and topology from DC power data."""

__version__ = "0.1.0"
