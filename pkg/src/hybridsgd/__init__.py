"""Sparse logistic regression with SGD, s-step SGD, FedAvg and HybridSGD on a simulated grid."""

__version__ = "0.1.0"
