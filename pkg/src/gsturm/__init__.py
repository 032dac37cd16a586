"""Forward and inverse spectral solver for matrix Sturm-Liouville operators
with self-adjoint vertex conditions, including the star-shaped graph case."""

__version__ = "0.1.0"
