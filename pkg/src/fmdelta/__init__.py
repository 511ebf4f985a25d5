"""Delta compression of fault-management keepalive packets."""

__version__ = "0.1.0"
