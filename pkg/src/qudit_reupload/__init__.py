"""Single-qudit data re-uploading: simulation, training and experiment runner."""

__version__ = "0.1"
