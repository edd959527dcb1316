"""permattack: black-box deep-learning attacks on permutation and lightweight ciphers."""

__version__ = "0.1.0"
