"""Country-level user classification from interaction counts."""
__version__ = "0.1.0"
