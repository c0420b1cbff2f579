"""Slice-wise self-distillation pretraining and frozen-backbone evaluation
for brain-MRI-like volumes, with a small autodiff tensor core, NIfTI-1 I/O,
perturbation-robustness sweeps, and representation analysis tools."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
