"""Naturalize event-camera data with a conditional GAN and benchmark it by classification."""

__version__ = "0.1.0"
