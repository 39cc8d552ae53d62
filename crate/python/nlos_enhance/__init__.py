"""Learned enhancement of partial transient scans into phasor fields."""

from .nlt import NltError, NltFile, read_nlt, write_nlt

__all__ = ["NltError", "NltFile", "read_nlt", "write_nlt"]
