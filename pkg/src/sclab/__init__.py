"""Random words, stable commutator length bounds and random-product CLTs."""

__version__ = "0.1.0"
