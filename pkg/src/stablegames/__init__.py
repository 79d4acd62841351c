"""Partial identification of discrete games under weak assumptions on information."""
__version__ = "0.1.0"
