"""Self-supervised speech representation distances as quality measures and
enhancement losses."""

__version__ = "0.1.0"
