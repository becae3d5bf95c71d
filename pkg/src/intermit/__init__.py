"""Littlewood-Paley intermittency diagnostics for periodic velocity fields."""

__version__ = "0.1.0"
