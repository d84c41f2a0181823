"""Dynamic information-flow control with dependent security labels for SIF-IR programs."""

__version__ = "0.1.0"
