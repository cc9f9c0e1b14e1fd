"""Oracle-guided proving and subvalue-map synthesis for differential game logic."""

__version__ = "0.1.0"
