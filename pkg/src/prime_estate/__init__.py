"""Price prediction for prime residential listings."""

__version__ = "0.1.0"
