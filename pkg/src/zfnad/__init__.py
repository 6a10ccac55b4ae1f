"""Post-reconstruction anomaly scoring for registered industrial images.

The pipeline compares each image with its reconstruction, localizes the most
suspicious patches, extracts image/pixel/patch level metrics and trains a
classifier whose probability is used as a composite anomaly score, with a
decision threshold calibrated so that no abnormal calibration image is missed.
"""

from zfnad.tensor import ImageTensor, DiffMap, Aggregates, abs_diff, aggregate, load_image, mse

__version__ = "0.1.0"

__all__ = [
    "Aggregates",
    "DiffMap",
    "ImageTensor",
    "abs_diff",
    "aggregate",
    "load_image",
    "mse",
]
