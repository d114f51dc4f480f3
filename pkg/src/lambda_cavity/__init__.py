"""Lambda-type three-level system in a lossy two-mode cavity."""

__version__ = "0.1.0"
