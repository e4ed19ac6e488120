"""Sum-of-squares certification of stability for time-delay systems."""

__version__ = "0.1.0"
