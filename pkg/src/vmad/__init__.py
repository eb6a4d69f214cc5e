"""Score fusion and evaluation toolkit for video-based morphing attack detection."""

__version__ = "0.1.0"
