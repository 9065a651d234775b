"""Distributionally robust federated training of RIS phase-configuration
classifiers over simulated heterogeneous wireless channels."""

from . import channel, diagnostics, fed, harness, labeling, metrics, mlp

__all__ = ["channel", "diagnostics", "fed", "harness", "labeling", "metrics", "mlp"]

__version__ = "0.1.0"
