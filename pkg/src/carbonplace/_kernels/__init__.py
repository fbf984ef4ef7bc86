"""Kernel backend selection: compiled extension if available, numpy otherwise."""

try:
    from ._evalcore import eval_placements

    BACKEND = "compiled"
except ImportError:  # extension not built
    from ._evalpy import eval_placements

    BACKEND = "python"

__all__ = ["eval_placements", "BACKEND"]
