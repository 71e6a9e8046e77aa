"""Gaussian a-priori LLR generation for component-wise pre-training.

Artificial priors are drawn from a Gaussian whose parameter is set through
the inverse J-function so that their mutual information with the bits hits
a target level ``i_pre``.  Two parameterizations are provided (see
:class:`PriorSpec`): ``paper_literal`` treats the inverse J-function output
as the LLR mean with variance twice the mean; ``consistent`` treats it as
the LLR standard deviation (mean sigma^2/2), which is the convention under
which :func:`estimate_mi` recovers ``i_pre`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

# Coefficients of the closed-form J-function approximation.
H1 = 0.3073
H2 = 0.8935
H3 = 1.1064

_LN2 = float(np.log(2.0))


def j_inverse(i_pre):
    """Gaussian parameter for a target mutual information in [0, 1).

    Evaluates (-(1/H1) * log2(1 - i^(1/H3)))^(1/(2*H2)); returns 0 at i = 0.
    """
    arr = np.asarray(i_pre, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr >= 1):
        raise ValueError("i_pre must lie in [0, 1)")
    with np.errstate(divide="ignore"):
        out = (-(1.0 / H1) * np.log2(1.0 - arr ** (1.0 / H3))) ** (1.0 / (2.0 * H2))
    out = np.where(arr == 0, 0.0, out)
    return float(out) if np.ndim(i_pre) == 0 else out


def j_forward(sigma_ch):
    """Mutual information of a consistent Gaussian LLR with parameter sigma.

    Closed form (1 - 2^(-H1 * sigma^(2*H2)))^H3; exact inverse of
    :func:`j_inverse` up to float rounding.
    """
    arr = np.asarray(sigma_ch, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("sigma must be non-negative")
    out = (1.0 - 2.0 ** (-H1 * arr ** (2.0 * H2))) ** H3
    return float(out) if np.ndim(sigma_ch) == 0 else out


@dataclass(frozen=True)
class PriorSpec:
    """Target prior information level (scalar or half-open uniform range)
    and parameterization mode (`paper_literal` or `consistent`)."""

    i_pre: float | tuple[float, float]
    mode: str = "paper_literal"

    def __post_init__(self):
        lo, hi = self.bounds()
        if not (0.0 <= lo <= hi <= 1.0) or lo >= 1.0:
            raise ValueError(f"i_pre must lie in [0, 1), got {self.i_pre}")
        if self.mode not in ("paper_literal", "consistent"):
            raise ValueError(f"unknown prior mode {self.mode!r}")

    def bounds(self) -> tuple[float, float]:
        if isinstance(self.i_pre, tuple):
            return float(self.i_pre[0]), float(self.i_pre[1])
        return float(self.i_pre), float(self.i_pre)


def sample_priors(u: torch.Tensor, spec: PriorSpec, gen: torch.Generator) -> torch.Tensor:
    """A-priori LLRs for the bits `u`, shape (batch, k, 1).

    Generated from `u` and `gen` only, hence statistically independent of
    any channel noise.  If `spec.i_pre` is a range, one level is drawn per
    block, uniform on [lo, hi).
    """
    lo, hi = spec.bounds()
    batch = u.shape[0]
    if hi > lo:
        i_pre = lo + (hi - lo) * torch.rand(batch, 1, generator=gen, dtype=torch.float64)
        i_pre = torch.clamp(i_pre, max=np.nextafter(1.0, 0.0))
    else:
        i_pre = torch.full((batch, 1), lo, dtype=torch.float64)
    param = torch.from_numpy(np.asarray(j_inverse(i_pre.numpy())))
    if spec.mode == "paper_literal":
        mean = param * (2.0 * u.double() - 1.0)
        std = torch.sqrt(2.0 * param)
    else:  # consistent: param is the LLR standard deviation
        mean = 0.5 * param ** 2 * (2.0 * u.double() - 1.0)
        std = param
    noise = torch.randn(u.shape, generator=gen, dtype=torch.float64)
    return (mean + std * noise).to(torch.float32).unsqueeze(-1)


def estimate_mi(l, u) -> float:
    """Sample-mean mutual information between soft messages and bits.

    Uses the consistent-LLR estimator I ~= 1 - E[log2(1 + exp(-(2u-1) l))],
    clipped to [0, 1].  Intended for validation with >= 1e4 samples.
    """
    l = np.asarray(l.detach().cpu() if torch.is_tensor(l) else l, dtype=np.float64)
    u = np.asarray(u.detach().cpu() if torch.is_tensor(u) else u, dtype=np.float64)
    if l.ndim == 3:
        l = l[:, :, 0]
    if l.size == 0:
        raise ValueError("cannot estimate mutual information from an empty batch")
    t = (2.0 * u - 1.0) * l
    mi = 1.0 - np.mean(np.logaddexp(0.0, -t)) / _LN2
    return float(min(max(mi, 0.0), 1.0))
