"""Human body-part segmentation on sparse, sequential point clouds."""

__version__ = "0.1.0"
