"""Injection-molding part weight prediction from mixed sequential/non-sequential process data."""

__version__ = "0.1.0"
