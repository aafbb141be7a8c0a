"""Rate-compatible polar codes over families of binary memoryless symmetric channels."""

__version__ = "0.1.0"
