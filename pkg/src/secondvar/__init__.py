"""Second-order sufficiency checks for one-dimensional variational problems."""

__version__ = "0.1.0"
