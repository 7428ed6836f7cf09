"""Closed-domain extractive question answering for Bengali, built from scratch."""

__version__ = "0.1.0"
