"""Geometry and evaluation toolkit for image-based 3D object detection."""

__version__ = "0.1.0"
