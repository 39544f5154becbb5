"""Streaming convolution, multiplication and Hamming distance under a
traced cell store, with hard-instance constructors and brute-force
witnesses for their combinatorial properties."""

__version__ = "0.1.0"
