"""Parallel and serial turbo-autoencoder assemblies.

Component encoders/decoders are 1-D convolutional networks applied along
the block dimension with same-length padding, so every network accepts any
block length; only the interleaver is tied to k.  Decoders exchange
extrinsic messages (total minus a-priori) through the interleaver.

Message tensors are (batch, k, F).  The parallel model transmits
x = [x1, x2_pi] with one symbol per branch and position (rate 1/2); the
serial model maps bits to a k x F_c coded sequence, interleaves it, and
maps that to 2k symbols.
"""

from __future__ import annotations

import collections
import math
from contextlib import contextmanager
from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn.functional as F_t
from torch import nn

from . import blocks
from .errors import ConfigError
from .ste import binarize

ACTIVATIONS = {
    "elu": F_t.elu,
    "relu": torch.relu,
    "tanh": torch.tanh,
    "selu": F_t.selu,
    "gelu": F_t.gelu,
    "identity": lambda x: x,
}


@dataclass(frozen=True)
class ComponentNetConfig:
    """Width/shape of one component network."""

    conv_layers: int = 2
    filters: int = 100
    kernel_size: int = 5
    activation: str = "elu"
    output_features: int = 1

    def __post_init__(self):
        if self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if min(self.conv_layers, self.filters, self.output_features) < 1:
            raise ConfigError("conv_layers, filters and output_features must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


class ComponentNet(nn.Module):
    """Stack of same-length 1-D convolutions plus a per-position linear head.

    Input and output are (batch, k, features); works for any k.
    """

    def __init__(self, in_features: int, cfg: ComponentNetConfig):
        super().__init__()
        self.cfg = cfg
        self.in_features = in_features
        pad = (cfg.kernel_size - 1) // 2
        convs = []
        prev = in_features
        for _ in range(cfg.conv_layers):
            convs.append(nn.Conv1d(prev, cfg.filters, cfg.kernel_size, padding=pad))
            prev = cfg.filters
        self.convs = nn.ModuleList(convs)
        self.head = nn.Conv1d(prev, cfg.output_features, 1)
        self.act = ACTIVATIONS[cfg.activation]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 3 or x.shape[2] != self.in_features:
            raise ValueError(
                f"expected (batch, k, {self.in_features}), got {tuple(x.shape)}"
            )
        h = x.transpose(1, 2)
        for conv in self.convs:
            h = self.act(conv(h))
        return self.head(h).transpose(1, 2)


def init_parameters(module: nn.Module, gen: torch.Generator) -> None:
    """Re-draw all conv weights/biases from `gen` (uniform, fan-in scaled),
    making model construction reproducible without global seeding."""
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Conv1d):
                fan_in = m.in_channels * m.kernel_size[0]
                bound = 1.0 / math.sqrt(fan_in)
                m.weight.uniform_(-bound, bound, generator=gen)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=gen)


class PowerNormalizer(nn.Module):
    """Zero-mean / unit-energy constraint on encoder outputs.

    In training mode the batch statistics are used (exact unit second
    moment, gradients flow through the stats).  After :meth:`calibrate`
    the stored statistics are applied in eval mode, so encoding becomes a
    deterministic per-block map.
    """

    def __init__(self):
        super().__init__()
        self.register_buffer("mu", torch.zeros((), dtype=torch.float64))
        self.register_buffer("sigma", torch.ones((), dtype=torch.float64))
        self.register_buffer("calibrated", torch.zeros((), dtype=torch.bool))
        self._acc = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self._acc is not None:
            x64 = x.detach().double()
            self._acc[0] += float(x64.sum())
            self._acc[1] += float((x64 ** 2).sum())
            self._acc[2] += x64.numel()
        if self.training or not bool(self.calibrated):
            return blocks.normalize_power(x)
        return ((x - self.mu) / self.sigma).to(x.dtype)

    @torch.no_grad()
    def calibrate(self, sample: torch.Tensor) -> None:
        x = sample.double()
        mu = x.mean()
        var = ((x - mu) ** 2).mean()
        if var == 0:
            raise ValueError("calibration sample is constant")
        self.mu.copy_(mu)
        self.sigma.copy_(var.sqrt())
        self.calibrated.fill_(True)

    def start_calibration(self) -> None:
        """Begin accumulating raw-input statistics over subsequent batches."""
        self._acc = [0.0, 0.0, 0]

    def finish_calibration(self) -> None:
        total, total_sq, count = self._acc
        self._acc = None
        if count == 0:
            raise ValueError("no samples seen during calibration")
        mu = total / count
        var = total_sq / count - mu * mu
        if var <= 0:
            raise ValueError("calibration sample is constant")
        self.mu.fill_(mu)
        self.sigma.fill_(math.sqrt(var))
        self.calibrated.fill_(True)


# Optional instrumentation: counts component-network applications by role.
_ACTIVE_COUNTERS: list[collections.Counter] = []


@contextmanager
def count_net_passes():
    """Context manager yielding a Counter of encoder/decoder net passes."""
    counter = collections.Counter()
    _ACTIVE_COUNTERS.append(counter)
    try:
        yield counter
    finally:
        _ACTIVE_COUNTERS.remove(counter)


def _tally(role: str) -> None:
    for counter in _ACTIVE_COUNTERS:
        counter[role] += 1


class ParallelModel(nn.Module):
    """Two parallel branch encoders and an iterative two-decoder loop.

    One branch encodes the bits, the other an interleaved copy; each branch
    emits one symbol per position (rate 1/2).  Decoder i sees its branch
    observation plus the other decoder's extrinsic message.  With
    ``weight_sharing`` the two decoder networks are reused across
    iterations (requires F = 1, enables any inference iteration count);
    otherwise each iteration has its own decoder pair and the final pair
    emits a single feature.
    """

    def __init__(
        self,
        k: int,
        F: int = 10,
        iterations: int = 6,
        weight_sharing: bool = False,
        binarize_symbols: bool = False,
        interleaver_seed: int = 0,
        enc_cfg: ComponentNetConfig | None = None,
        dec_cfg: ComponentNetConfig | None = None,
    ):
        super().__init__()
        if iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if weight_sharing and F != 1:
            raise ConfigError("weight sharing requires message feature count F = 1")
        enc_cfg = enc_cfg or ComponentNetConfig()
        dec_cfg = dec_cfg or ComponentNetConfig()
        self.F = F
        self.iterations = iterations
        self.weight_sharing = weight_sharing
        self.binarize_symbols = binarize_symbols
        self.enc_cfg = replace(enc_cfg, output_features=1)
        self.dec_cfg = dec_cfg

        self.enc1 = ComponentNet(1, self.enc_cfg)
        self.enc2 = ComponentNet(1, self.enc_cfg)
        self.norm1 = PowerNormalizer()
        self.norm2 = PowerNormalizer()
        if weight_sharing:
            self.dec1 = ComponentNet(1 + F, replace(dec_cfg, output_features=F))
            self.dec2 = ComponentNet(1 + F, replace(dec_cfg, output_features=F))
        else:
            self.dec1 = nn.ModuleList(
                ComponentNet(1 + F, replace(dec_cfg, output_features=F))
                for _ in range(iterations)
            )
            self.dec2 = nn.ModuleList(
                ComponentNet(
                    1 + F,
                    replace(dec_cfg, output_features=1 if i == iterations - 1 else F),
                )
                for i in range(iterations)
            )
        self.interleaver = blocks.make_interleaver(interleaver_seed, k)

    @property
    def k(self) -> int:
        return self.interleaver.length

    @property
    def n(self) -> int:
        return 2 * self.k

    @property
    def rate(self) -> float:
        return 0.5

    def resize(self, k_new: int) -> None:
        """Re-target the model to a new block length.

        Only the interleaver is regenerated (same seed, new length); all
        weight shapes are unchanged.  Normalizers fall back to batch
        statistics until recalibrated.
        """
        self.interleaver = blocks.make_interleaver(self.interleaver.seed, k_new)
        for norm in (self.norm1, self.norm2):
            norm.calibrated.fill_(False)

    def encoder_parameters(self):
        return list(self.enc1.parameters()) + list(self.enc2.parameters())

    def decoder_parameters(self):
        return list(self.dec1.parameters()) + list(self.dec2.parameters())

    def _branch_encode(self, component: int, bipolar: torch.Tensor) -> torch.Tensor:
        enc = self.enc1 if component == 1 else self.enc2
        norm = self.norm1 if component == 1 else self.norm2
        _tally("encoder")
        h = norm(enc(bipolar.unsqueeze(-1)).squeeze(-1))
        return binarize(h) if self.binarize_symbols else h

    def encode(self, u: torch.Tensor) -> torch.Tensor:
        """Map bits (batch, k) to symbols (batch, 2k) = [x1, x2_pi]."""
        if u.shape[1] != self.k:
            raise ValueError(f"expected block length {self.k}, got {u.shape[1]}")
        b = 2.0 * u - 1.0
        x1 = self._branch_encode(1, b)
        x2_pi = self._branch_encode(2, blocks.interleave(b, self.interleaver))
        return torch.cat([x1, x2_pi], dim=1)

    def component_encode(self, component: int, u: torch.Tensor) -> torch.Tensor:
        """Single-branch encoding used during component-wise pre-training."""
        return self._branch_encode(component, 2.0 * u - 1.0)

    def component_pass(
        self, component: int, y: torch.Tensor, l_a: torch.Tensor, iteration: int = 0
    ) -> torch.Tensor:
        """One decoder application: total information from (y_i, l^A)."""
        dec = self.dec1 if component == 1 else self.dec2
        net = dec if self.weight_sharing else dec[iteration]
        _tally("decoder")
        return net(torch.cat([y.unsqueeze(-1), l_a], dim=2))

    def decode(
        self,
        y1: torch.Tensor,
        y2_pi: torch.Tensor,
        iterations: int | None = None,
        init_prior: torch.Tensor | None = None,
        return_prior: bool = False,
        trace: list | None = None,
    ):
        """Iterative extrinsic decoding; returns soft bit estimates (batch, k, 1).

        `init_prior` seeds decoder 1's a-priori message (defaults to zeros);
        with `return_prior` the post-loop prior is returned as well, making
        the iteration an explicit state transition (weight sharing only).
        `trace`, if given a list, collects per-iteration message dicts.
        """
        n_iter = self.iterations if iterations is None else iterations
        if n_iter < 1:
            raise ValueError("iteration count must be >= 1")
        if not self.weight_sharing and n_iter != self.iterations:
            raise ValueError(
                "per-iteration decoder weights are fixed to "
                f"{self.iterations} iterations"
            )
        batch = y1.shape[0]
        spec = self.interleaver
        l_a1 = (
            torch.zeros(batch, self.k, self.F, dtype=y1.dtype)
            if init_prior is None
            else init_prior
        )
        l_t2 = None
        for it in range(n_iter):
            last = it == n_iter - 1
            l_t1 = self.component_pass(1, y1, l_a1, it)
            l_e1 = blocks.extrinsic(l_t1, l_a1)
            l_a2 = blocks.interleave(l_e1, spec)
            l_t2 = self.component_pass(2, y2_pi, l_a2, it)
            if self.weight_sharing or not last:
                l_e2 = blocks.extrinsic(l_t2, l_a2)
                l_a1 = blocks.deinterleave(l_e2, spec)
            if trace is not None:
                trace.append(
                    {"l_t1": l_t1, "l_e1": l_e1, "l_a2": l_a2, "l_t2": l_t2}
                )
        out = blocks.deinterleave(l_t2, spec)
        if return_prior:
            if not self.weight_sharing:
                raise ValueError("decoder state is only defined with weight sharing")
            return out, l_a1
        return out

    def decode_symbols(self, y: torch.Tensor, iterations: int | None = None):
        """Decode a full received word (batch, 2k) by splitting the branches."""
        if y.shape[1] != self.n:
            raise ValueError(f"expected {self.n} symbols, got {y.shape[1]}")
        return self.decode(y[:, : self.k], y[:, self.k :], iterations=iterations)


class SerialModel(nn.Module):
    """Serially concatenated autoencoder.

    The outer encoder expands bits into a k x F_c coded sequence (binarized
    through the straight-through estimator by default), which is
    interleaved and mapped to 2k symbols by the inner encoder.  During
    decoding only the inner decoder sees the channel output; the outer
    decoder works purely on deinterleaved code messages and emits both its
    extrinsic feedback and the bit estimates.  Decoder weights are shared
    across iterations.
    """

    def __init__(
        self,
        k: int,
        F: int = 10,
        F_c: int | None = None,
        iterations: int = 6,
        binarize_coded: bool = True,
        binarize_symbols: bool = False,
        interleaver_seed: int = 0,
        interleaver_mode: str = "block",
        enc_cfg: ComponentNetConfig | None = None,
        dec_cfg: ComponentNetConfig | None = None,
    ):
        super().__init__()
        if iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if interleaver_mode not in ("block", "flattened"):
            raise ConfigError(f"unknown interleaver mode {interleaver_mode!r}")
        enc_cfg = enc_cfg or ComponentNetConfig()
        dec_cfg = dec_cfg or ComponentNetConfig()
        self.F = F
        self.F_c = F if F_c is None else F_c
        self.iterations = iterations
        self.binarize_coded = binarize_coded
        self.binarize_symbols = binarize_symbols
        self.interleaver_mode = interleaver_mode
        self.enc_cfg = enc_cfg
        self.dec_cfg = dec_cfg
        self._k = k

        self.outer_enc = ComponentNet(1, replace(enc_cfg, output_features=self.F_c))
        self.inner_enc = ComponentNet(self.F_c, replace(enc_cfg, output_features=2))
        self.inner_dec = ComponentNet(
            2 + self.F_c, replace(dec_cfg, output_features=self.F_c)
        )
        self.outer_dec = ComponentNet(
            self.F_c, replace(dec_cfg, output_features=self.F_c + 1)
        )
        self.coded_norm = PowerNormalizer()
        self.sym_norm = PowerNormalizer()
        self.interleaver = blocks.make_interleaver(
            interleaver_seed, self._interleaver_length(k)
        )

    def _interleaver_length(self, k: int) -> int:
        return k if self.interleaver_mode == "block" else k * self.F_c

    @property
    def k(self) -> int:
        return self._k

    @property
    def n(self) -> int:
        return 2 * self._k

    @property
    def rate(self) -> float:
        return 0.5

    def resize(self, k_new: int) -> None:
        self._k = k_new
        self.interleaver = blocks.make_interleaver(
            self.interleaver.seed, self._interleaver_length(k_new)
        )
        for norm in (self.coded_norm, self.sym_norm):
            norm.calibrated.fill_(False)

    def encoder_parameters(self):
        return list(self.outer_enc.parameters()) + list(self.inner_enc.parameters())

    def decoder_parameters(self):
        return list(self.inner_dec.parameters()) + list(self.outer_dec.parameters())

    def coded_sequence(self, u: torch.Tensor) -> torch.Tensor:
        """Outer-encoder output after optional binarization, (batch, k, F_c)."""
        b = (2.0 * u - 1.0).unsqueeze(-1)
        _tally("encoder")
        c = self.outer_enc(b)
        if self.binarize_coded:
            c = binarize(self.coded_norm(c))
        return c

    def encode(self, u: torch.Tensor) -> torch.Tensor:
        """Map bits (batch, k) to symbols (batch, 2k)."""
        if u.shape[1] != self.k:
            raise ValueError(f"expected block length {self.k}, got {u.shape[1]}")
        c = self.coded_sequence(u)
        c_pi = blocks.interleave(c, self.interleaver, self.interleaver_mode)
        _tally("encoder")
        x = self.inner_enc(c_pi).reshape(u.shape[0], self.n)
        h = self.sym_norm(x)
        return binarize(h) if self.binarize_symbols else h

    def decode(self, y: torch.Tensor, iterations: int | None = None) -> torch.Tensor:
        """Iterative inner/outer decoding; returns bit estimates (batch, k, 1)."""
        n_iter = self.iterations if iterations is None else iterations
        if n_iter < 1:
            raise ValueError("iteration count must be >= 1")
        if y.shape[1] != self.n:
            raise ValueError(f"expected {self.n} symbols, got {y.shape[1]}")
        batch = y.shape[0]
        spec = self.interleaver
        mode = self.interleaver_mode
        y_feat = y.reshape(batch, self.k, 2)
        l_a_cpi = torch.zeros(batch, self.k, self.F_c, dtype=y.dtype)
        l_t_u = None
        for _ in range(n_iter):
            _tally("decoder")
            l_t_cpi = self.inner_dec(torch.cat([y_feat, l_a_cpi], dim=2))
            l_e_cpi = blocks.extrinsic(l_t_cpi, l_a_cpi)
            l_c = blocks.deinterleave(l_e_cpi, spec, mode)
            _tally("decoder")
            out = self.outer_dec(l_c)
            l_t_c, l_t_u = out[:, :, : self.F_c], out[:, :, self.F_c :]
            l_e_c = blocks.extrinsic(l_t_c, l_c)
            l_a_cpi = blocks.interleave(l_e_c, spec, mode)
        return l_t_u

    def decode_symbols(self, y: torch.Tensor, iterations: int | None = None):
        return self.decode(y, iterations=iterations)
