"""
Self-supervised point-cloud pretraining through rotation prediction.

The package covers the whole experiment chain: exact rotation maths, direction
sets, point-cloud data, a small reverse-mode autodiff engine, the PointNet-style
encoder, the pretext training loops, and the downstream evaluations (linear SVM
on frozen features and keypoint regression).
"""

__version__ = "0.1.0"
