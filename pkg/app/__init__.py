"""GaudinLens: Richardson-Gaudin and Dicke solvers with an exact-diagonalization oracle."""

from app.config import VERSION as __version__

__all__ = ["__version__"]
