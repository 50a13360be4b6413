"""Contact-map featurization, dimensionality reduction and Markov state model timescales."""

__version__ = "0.1.0"
