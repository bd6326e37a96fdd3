"""Track counting for nuclear track detector images."""

__version__ = "0.1.0"
