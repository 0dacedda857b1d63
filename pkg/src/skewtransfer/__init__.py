"""Transfer operators for countable-branch maps and skew products."""
__version__ = "0.1.0"
