"""Wasserstein stability bounds and coupled-trajectory diagnostics for
(noisy) SGD on neighboring datasets."""

from . import bounds, dynamics, harness, model, transport, verify

__all__ = ["bounds", "dynamics", "harness", "model", "transport", "verify"]
__version__ = "0.1.0"
