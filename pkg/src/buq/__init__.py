"""Bootstrap quantification of demand and weather uncertainty in power system models."""

__version__ = "0.1.0"
