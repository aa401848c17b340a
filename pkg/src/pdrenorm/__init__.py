"""Period-doubling renormalization of Henon-like maps in m+2 dimensions."""

from ._kernels import BACKEND, USING_EXT

__all__ = ["BACKEND", "USING_EXT"]
__version__ = "0.1.0"
