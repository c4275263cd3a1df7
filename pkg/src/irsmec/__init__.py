"""IRS-aided multi-cell mobile edge computing: cost model and BCD solvers."""

__version__ = "0.1.0"
