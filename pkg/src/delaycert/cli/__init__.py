"""Command-line front end and specification files."""

from .main import main, run

__all__ = ["main", "run"]
