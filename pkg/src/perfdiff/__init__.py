"""perfdiff: compare two programs' ASTs and predict which one runs faster."""

from perfdiff.errors import PerfdiffError

__version__ = "0.1.0"

__all__ = ["PerfdiffError", "__version__"]
