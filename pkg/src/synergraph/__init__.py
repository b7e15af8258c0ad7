"""Out-of-distribution drug synergy prediction toolkit."""
__version__ = "0.1.0"
