"""Non-singular boundary-element solver for the Laplace equation."""

__version__ = "0.1.0"
