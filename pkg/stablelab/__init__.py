"""stablelab - weak Euler laboratory for stable-driven SDEs."""

__version__ = "0.1.0"
