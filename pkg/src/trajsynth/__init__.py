"""Street-map-conditioned trajectory synthesis, baseline mobility models,
similarity metrics and a multi-cell network simulator."""

__version__ = "0.1.0"
