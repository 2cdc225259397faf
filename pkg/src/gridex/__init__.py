"""Ontology-driven extraction of tabular data from grid-structured documents."""
from .errors import GridexError

__version__ = "0.1.0"

__all__ = ["GridexError", "__version__"]
