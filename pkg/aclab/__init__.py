"""Allen-Cahn Gibbs-measure laboratory."""

__version__ = "0.1.0"
