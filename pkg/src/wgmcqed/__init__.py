"""Whispering-gallery microcavity modes and cavity-QED figures of merit."""

__version__ = "0.1.0"
