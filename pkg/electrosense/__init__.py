"""Electro-sensing simulation, wavelet feature reconstruction and boundary imaging."""

from __future__ import annotations

from electrosense.cli import main

__all__ = ["__version__", "main"]
__version__ = "0.1.0"
