"""Desk-scale workbench for accelerated multi-coil MRI reconstruction and
distribution-shift robustness experiments on synthetic data."""

from . import autodiff, data, fista, harness, kspace, learned, metrics, toy

__all__ = ["autodiff", "data", "fista", "harness", "kspace", "learned", "metrics", "toy"]

__version__ = "0.1.0"
