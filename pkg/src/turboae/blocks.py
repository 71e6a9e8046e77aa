"""Core signal-chain building blocks: SNR arithmetic, AWGN channel, power
normalization, interleaving and LLR arithmetic.

Conventions (batch first everywhere):
  bit blocks      (batch, k)      entries in {0, 1}
  symbol blocks   (batch, n)      real symbols, unit average energy
  soft messages   (batch, k, F)   for F = 1 every entry acts as an LLR,
                                  positive sign votes for bit 1

Functions accept torch tensors or numpy arrays; the RNG argument has to
match (``torch.Generator`` for tensors, ``numpy.random.Generator`` for
arrays).  All operations are pure given their RNG stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import DegenerateInputError


def ebno_to_sigma(ebno_db: float, rate: float) -> float:
    """Noise standard deviation for a bit-wise SNR of `ebno_db` dB.

    With unit-energy symbols, sigma^2 = 1 / (2 * rate * 10^(ebno_db/10)).
    """
    if rate <= 0:
        raise ValueError(f"code rate must be positive, got {rate}")
    return math.sqrt(1.0 / (2.0 * rate * 10.0 ** (ebno_db / 10.0)))


@dataclass(frozen=True)
class ChannelConfig:
    """AWGN channel operating point; `sigma` is derived from Eb/N0 and rate."""

    ebno_db: float
    rate: float

    @property
    def sigma(self) -> float:
        return ebno_to_sigma(self.ebno_db, self.rate)


def random_bits(batch: int, length: int, gen: torch.Generator) -> torch.Tensor:
    """Uniform i.i.d. bits as a float tensor (model-ready)."""
    return torch.randint(0, 2, (batch, length), generator=gen).to(torch.float32)


def awgn(x, sigma, gen):
    """y = x + z with z ~ N(0, sigma^2 I), reproducible from `gen`.

    `sigma` may be a scalar or broadcastable per-block array, e.g. shape
    (batch, 1) for one SNR draw per block.
    """
    if torch.is_tensor(x):
        if torch.is_tensor(sigma):
            if (sigma < 0).any():
                raise ValueError("sigma must be non-negative")
        elif sigma < 0:
            raise ValueError("sigma must be non-negative")
        noise = torch.randn(x.shape, generator=gen, dtype=x.dtype, device=x.device)
        return x + sigma * noise
    x = np.asarray(x)
    if np.any(np.asarray(sigma) < 0):
        raise ValueError("sigma must be non-negative")
    return x + sigma * gen.standard_normal(x.shape)


def normalize_power(x_raw):
    """Shift to zero mean and scale to unit average symbol energy.

    Statistics are taken over the entire batch, so the output satisfies
    |mean(x^2) - 1| <= 1e-6.  Stats are computed in float64 so the bound
    holds for float32 inputs too.
    """
    if torch.is_tensor(x_raw):
        x64 = x_raw.double()
        mu = x64.mean()
        var = ((x64 - mu) ** 2).mean()
        if var == 0:
            raise DegenerateInputError("all-constant batch cannot be power normalized")
        return ((x_raw - mu) / torch.sqrt(var)).to(x_raw.dtype)
    x = np.asarray(x_raw, dtype=np.float64)
    mu = x.mean()
    var = ((x - mu) ** 2).mean()
    if var == 0:
        raise DegenerateInputError("all-constant batch cannot be power normalized")
    out = (x - mu) / math.sqrt(var)
    return out.astype(np.asarray(x_raw).dtype) if np.asarray(x_raw).dtype.kind == "f" else out


@dataclass(frozen=True)
class InterleaverSpec:
    """Seeded fixed-point-free permutation and its inverse."""

    seed: int
    length: int
    perm: np.ndarray
    inv_perm: np.ndarray


def make_interleaver(seed: int, length: int) -> InterleaverSpec:
    """Uniformly sampled derangement of `length` positions.

    Rejection sampling over uniform permutations; the acceptance rate is
    about 1/e, so fewer than 3 attempts are needed on average.
    """
    if length < 2:
        raise ValueError(f"no derangement exists for length {length}")
    rng = np.random.default_rng(seed)
    idx = np.arange(length)
    while True:
        perm = rng.permutation(length)
        if not np.any(perm == idx):
            break
    inv_perm = np.argsort(perm)
    return InterleaverSpec(seed=seed, length=length, perm=perm, inv_perm=inv_perm)


def _permute(v, perm, axis_mode: str):
    if axis_mode == "block":
        if v.shape[1] != len(perm):
            raise ValueError(
                f"block interleaving needs length {len(perm)}, got {v.shape[1]}"
            )
        return v[:, perm] if v.ndim == 2 else v[:, perm, :]
    if axis_mode == "flattened":
        batch = v.shape[0]
        flat = v.reshape(batch, -1)
        if flat.shape[1] != len(perm):
            raise ValueError(
                f"flattened interleaving needs k*F = {len(perm)}, got {flat.shape[1]}"
            )
        return flat[:, perm].reshape(v.shape)
    raise ValueError(f"unknown axis_mode {axis_mode!r}")


def interleave(v, spec: InterleaverSpec, axis_mode: str = "block"):
    """Permute along the block dimension (`block`) or over all k*F entries
    (`flattened`).  In block mode the same permutation hits every feature
    column."""
    if v.ndim not in (2, 3):
        raise ValueError(f"expected a 2-D or 3-D batch, got ndim={v.ndim}")
    perm = spec.perm
    if torch.is_tensor(v):
        perm = torch.from_numpy(spec.perm).to(v.device)
    return _permute(v, perm, axis_mode)


def deinterleave(v, spec: InterleaverSpec, axis_mode: str = "block"):
    """Inverse of :func:`interleave` for the same spec and mode."""
    if v.ndim not in (2, 3):
        raise ValueError(f"expected a 2-D or 3-D batch, got ndim={v.ndim}")
    inv = spec.inv_perm
    if torch.is_tensor(v):
        inv = torch.from_numpy(spec.inv_perm).to(v.device)
    return _permute(v, inv, axis_mode)


def extrinsic(l_total, l_apriori):
    """Extrinsic message: total minus a-priori, elementwise."""
    if tuple(l_total.shape) != tuple(l_apriori.shape):
        raise ValueError(
            f"shape mismatch: {tuple(l_total.shape)} vs {tuple(l_apriori.shape)}"
        )
    return l_total - l_apriori


def hard_decision(l):
    """Hard bit decisions from single-feature soft messages.

    Accepts (batch, k) or (batch, k, 1); an entry of exactly 0 decides
    bit 0 (fixed tie-break).
    """
    if l.ndim == 3:
        if l.shape[2] != 1:
            raise ValueError(f"hard decision needs F=1, got F={l.shape[2]}")
        l = l[:, :, 0]
    elif l.ndim != 2:
        raise ValueError(f"expected (batch, k) or (batch, k, 1), got ndim={l.ndim}")
    if torch.is_tensor(l):
        return (l > 0).to(torch.int64)
    return (np.asarray(l) > 0).astype(np.int64)
