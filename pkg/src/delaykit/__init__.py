"""Analysis and controller synthesis for linear time-delay systems."""

__version__ = "0.1.0"
