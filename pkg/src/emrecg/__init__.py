"""Common-ground features for predicting the naturalness of multimodal referring expressions."""

__version__ = "0.1.0"
