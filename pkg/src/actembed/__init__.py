"""Unsupervised activity embeddings for wearable-sensor data."""

__version__ = "0.1.0"
