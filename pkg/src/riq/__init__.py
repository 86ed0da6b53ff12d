"""Region-based image classification and keyword retrieval."""

__version__ = "0.1.0"
