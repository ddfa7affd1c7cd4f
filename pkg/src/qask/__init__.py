"""Questioner/oracle evaluation harness for collaborative instance navigation."""

__version__ = "0.1.0"
