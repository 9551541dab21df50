"""Landmark shape analysis and likelihood-ratio speaker discrimination."""
__version__ = "0.1.0"
