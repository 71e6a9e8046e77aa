"""Saturated straight-through binarizer.

The forward pass maps to {-1, +1} via sign (with sign(0) := +1).  The
backward pass is a surrogate: the upstream gradient passes only where the
input magnitude is strictly below 1, and is zeroed elsewhere (closed
saturation region, so |x| = 1 already blocks the gradient).
"""

from __future__ import annotations

import numpy as np
import torch


def binarize_forward(x):
    """sign(x) with the 0 -> +1 convention; output entries are in {-1, +1}."""
    if torch.is_tensor(x):
        return torch.where(x >= 0, 1.0, -1.0).to(x.dtype)
    x = np.asarray(x)
    return np.where(x >= 0, 1.0, -1.0)


def binarize_backward(x, upstream):
    """Surrogate gradient: upstream masked by indicator(|x| < 1)."""
    if tuple(x.shape) != tuple(upstream.shape):
        raise ValueError(
            f"shape mismatch: {tuple(x.shape)} vs {tuple(upstream.shape)}"
        )
    if torch.is_tensor(x):
        return upstream * (x.abs() < 1).to(upstream.dtype)
    return np.asarray(upstream) * (np.abs(np.asarray(x)) < 1)


class _SaturatedSTE(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return torch.where(x >= 0, 1.0, -1.0).to(x.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (x,) = ctx.saved_tensors
        return binarize_backward(x, grad_output)


def binarize(x: torch.Tensor) -> torch.Tensor:
    """Autograd-aware binarization for use inside models."""
    return _SaturatedSTE.apply(x)
