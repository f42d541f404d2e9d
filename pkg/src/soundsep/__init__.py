"""Multichannel sound separation toolkit: scene simulation, separation model,
training and evaluation utilities."""

__version__ = "0.1.0"
