"""Evaluation toolkit for small-object 3D reconstructions.

Aligns reconstructed point clouds onto a reference, renders virtual views,
computes image and point-cloud quality metrics and flags anomalies from the
change in Hausdorff distance.
"""

__version__ = "0.1.0"
