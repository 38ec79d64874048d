"""Seasonal multi-store inventory control: environment, policies, actor-critic
training, a small-instance dynamic-programming benchmark, and 2D actor
loss-landscape slices."""

__version__ = "0.1.0"
