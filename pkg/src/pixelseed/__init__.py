"""Dense pseudo-label synthesis for driving scenes from one annotated pixel per class."""

__version__ = "0.1.0"
