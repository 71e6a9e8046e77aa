"""Monte-Carlo BER/BLER estimation, target-BER search, training-curve
smoothing, finite-blocklength and uncoded reference curves, and CRC-7
error detection with least-reliable bit-flip decoding.

The Monte-Carlo harness works on any codec exposing ``payload_k``, ``n``,
``rate``, ``encode(u) -> symbols`` and ``decode_bits(y) -> bits``;
checkpoints and models are wrapped automatically.  Runs are deterministic
per seed (single worker).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.special import erfc

from . import blocks
from .checkpoint import Checkpoint, restore_model

LOG2_E = float(np.log2(np.e))

REPORT_COLUMNS = [
    "ebno_db",
    "bits_sent",
    "bit_errors",
    "ber",
    "blocks_sent",
    "block_errors",
    "bler",
    "seed",
]


def q_function(x):
    """Gaussian tail probability via the complementary error function."""
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / np.sqrt(2.0))


def uncoded_bpsk_ber(ebno_db):
    """Bit error rate of uncoded BPSK on the real AWGN channel."""
    e = np.asarray(ebno_db, dtype=np.float64)
    out = q_function(np.sqrt(2.0 * 10.0 ** (e / 10.0)))
    return float(out) if np.ndim(ebno_db) == 0 else out


def normal_approximation(k: int, n: int, ebno_db):
    """Finite-blocklength estimate of the best achievable BLER at (k, n).

    Uses the real-AWGN capacity/dispersion with per-symbol SNR
    2 * (k/n) * 10^(ebno_db/10):
    BLER ~= Q((n*C - k + 0.5*log2(n)) / sqrt(n*V)).
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n, got k={k}, n={n}")
    e = np.asarray(ebno_db, dtype=np.float64)
    snr = 2.0 * (k / n) * 10.0 ** (e / 10.0)
    cap = 0.5 * np.log2(1.0 + snr)
    disp = (snr * (snr + 2.0)) / (2.0 * (snr + 1.0) ** 2) * LOG2_E ** 2
    arg = (n * cap - k + 0.5 * np.log2(n)) / np.sqrt(n * disp)
    out = q_function(arg)
    return float(out) if np.ndim(ebno_db) == 0 else out


def moving_average(series, n: int = 10):
    """Causal window mean; the first n-1 outputs average the available prefix."""
    if n < 1:
        raise ValueError("window must be >= 1")
    values = list(series)
    if not values:
        raise ValueError("cannot average an empty series")
    out = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= n:
            acc -= values[i - n]
        out.append(acc / min(i + 1, n))
    return out


# ---------------------------------------------------------------------------
# CRC-7 with bit-flip decoding
# ---------------------------------------------------------------------------

CRC7_POLY = 0x89  # x^7 + x^3 + 1


@dataclass(frozen=True)
class CrcConfig:
    """CRC-7 layout: `info_len` payload bits, 7 check bits, and the search
    budget of the bit-flip decoder."""

    info_len: int
    polynomial: int = CRC7_POLY
    flip_budget: int = 16

    def __post_init__(self):
        if self.polynomial.bit_length() != 8:
            raise ValueError("generator polynomial must have degree exactly 7")
        if self.info_len < 1:
            raise ValueError("info_len must be positive")
        if self.flip_budget < 0:
            raise ValueError("flip_budget must be non-negative")

    @property
    def total_len(self) -> int:
        return self.info_len + 7


def _x_pow_mod(p: int, poly: int) -> int:
    r = 1
    for _ in range(p):
        r <<= 1
        if r & 0x80:
            r ^= poly
    return r


def _syndrome_table(cfg: CrcConfig) -> np.ndarray:
    """Per-position syndrome contribution of flipping one codeword bit.

    Positions are MSB-first: bit i of the info part contributes
    x^(info_len - 1 - i + 7) mod g; check-bit positions contribute unit
    vectors.
    """
    table = np.zeros((cfg.total_len, 7), dtype=np.int64)
    for i in range(cfg.info_len):
        r = _x_pow_mod(cfg.info_len - 1 - i + 7, cfg.polynomial)
        table[i] = [(r >> j) & 1 for j in range(6, -1, -1)]
    for t in range(7):
        table[cfg.info_len + t, t] = 1
    return table


def _as_bit_array(bits) -> np.ndarray:
    if torch.is_tensor(bits):
        bits = bits.detach().cpu().numpy()
    return np.asarray(bits, dtype=np.int64)


def crc_attach(info, cfg: CrcConfig) -> np.ndarray:
    """Append the 7 check bits (remainder of info * x^7 modulo the generator)."""
    info = _as_bit_array(info)
    if info.shape[1] != cfg.info_len:
        raise ValueError(f"expected {cfg.info_len} info bits, got {info.shape[1]}")
    table = _syndrome_table(cfg)[: cfg.info_len]
    crc = info.dot(table) % 2
    return np.concatenate([info, crc], axis=1)


def crc_check(code, cfg: CrcConfig) -> np.ndarray:
    """True per block iff the codeword passes the CRC."""
    code = _as_bit_array(code)
    if code.shape[1] != cfg.total_len:
        raise ValueError(f"expected {cfg.total_len} bits, got {code.shape[1]}")
    syndrome = code.dot(_syndrome_table(cfg)) % 2
    return ~syndrome.any(axis=1)


def crc_bitflip_decode(l_u, cfg: CrcConfig):
    """Hard-decide, then repair CRC failures by flipping low-reliability bits.

    Single flips over the `flip_budget` least reliable positions are tried
    in ascending |LLR| order, then pairs from the same candidate set; the
    first CRC pass wins.  Returns (info_bits, ok, flips): blocks whose
    search is exhausted keep their uncorrected hard decision with
    ok=False.
    """
    if torch.is_tensor(l_u):
        l_u = l_u.detach().cpu().numpy()
    l_u = np.asarray(l_u, dtype=np.float64)
    if l_u.ndim == 3:
        if l_u.shape[2] != 1:
            raise ValueError("bit-flip decoding needs F=1 messages")
        l_u = l_u[:, :, 0]
    if l_u.shape[1] != cfg.total_len:
        raise ValueError(f"expected {cfg.total_len} soft bits, got {l_u.shape[1]}")

    bits = (l_u > 0).astype(np.int64)
    table = _syndrome_table(cfg)
    syndromes = bits.dot(table) % 2
    ok = ~syndromes.any(axis=1)
    flips = np.zeros(len(bits), dtype=np.int64)

    deltas = np.packbits(table.astype(np.uint8), axis=1, bitorder="little")[:, 0]
    for row in np.nonzero(~ok)[0]:
        target = int(np.packbits(syndromes[row].astype(np.uint8), bitorder="little")[0])
        order = np.argsort(np.abs(l_u[row]), kind="stable")[: cfg.flip_budget]
        hit = None
        for j in order:
            if deltas[j] == target:
                hit = (j,)
                break
        if hit is None:
            for a, b in itertools.combinations(order, 2):
                if deltas[a] ^ deltas[b] == target:
                    hit = (a, b)
                    break
        if hit is not None:
            bits[row, list(hit)] ^= 1
            ok[row] = True
            flips[row] = len(hit)
    return bits[:, : cfg.info_len], ok, flips


# ---------------------------------------------------------------------------
# Codecs and the Monte-Carlo harness
# ---------------------------------------------------------------------------


class ModelCodec:
    """Adapter putting a trained model behind the codec protocol."""

    def __init__(self, model, iterations: int | None = None):
        self.model = model.eval()
        self.iterations = iterations
        self.payload_k = model.k
        self.n = model.n
        self.rate = model.k / model.n

    def encode(self, u: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self.model.encode(u)

    def decode_bits(self, y: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            llr = self.model.decode_symbols(y, iterations=self.iterations)
        return blocks.hard_decision(llr)


class CrcCodec:
    """Model codec with an embedded CRC-7 and bit-flip decoding.

    The payload shrinks to `info_len` bits, so the effective rate (and the
    Eb/N0-to-sigma mapping) shifts accordingly.
    """

    def __init__(self, model, cfg: CrcConfig, iterations: int | None = None):
        if cfg.total_len != model.k:
            raise ValueError(
                f"CRC layout needs info_len + 7 == k ({cfg.total_len} != {model.k})"
            )
        self.model = model.eval()
        self.cfg = cfg
        self.iterations = iterations
        self.payload_k = cfg.info_len
        self.n = model.n
        self.rate = cfg.info_len / model.n

    def encode(self, u: torch.Tensor) -> torch.Tensor:
        code = crc_attach(u, self.cfg)
        with torch.no_grad():
            return self.model.encode(torch.from_numpy(code).to(torch.float32))

    def decode_bits(self, y: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            llr = self.model.decode_symbols(y, iterations=self.iterations)
        info, _, _ = crc_bitflip_decode(llr, self.cfg)
        return torch.from_numpy(info)


class UncodedBpskCodec:
    """Rate-1 BPSK reference 'code' (the analytic baseline)."""

    def __init__(self, k: int = 64):
        self.payload_k = k
        self.n = k
        self.rate = 1.0

    def encode(self, u: torch.Tensor) -> torch.Tensor:
        return 2.0 * u - 1.0

    def decode_bits(self, y: torch.Tensor) -> torch.Tensor:
        return (y > 0).to(torch.int64)


@dataclass
class EvalRow:
    ebno_db: float
    bits_sent: int
    bit_errors: int
    ber: float
    blocks_sent: int
    block_errors: int
    bler: float
    seed: int


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    min_block_errors: int = 100
    max_blocks: int = 0
    seed: int = 0

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for row in self.rows:
                writer.writerow([getattr(row, c) for c in REPORT_COLUMNS])


def _as_codec(target, crc: CrcConfig | None = None, iterations: int | None = None):
    if isinstance(target, Checkpoint):
        target = restore_model(target)
    if hasattr(target, "payload_k") and hasattr(target, "decode_bits"):
        if crc is not None:
            raise ValueError("pass the model, not a codec, when using CRC")
        return target
    if crc is not None:
        return CrcCodec(target, crc, iterations=iterations)
    return ModelCodec(target, iterations=iterations)


def monte_carlo(
    target,
    ebno_db_list,
    min_block_errors: int = 100,
    max_blocks: int = 1_000_000,
    batch_blocks: int = 1024,
    seed: int = 0,
    crc: CrcConfig | None = None,
    iterations: int | None = None,
) -> EvalReport:
    """Simulate each SNR point until `min_block_errors` block errors are
    seen or `max_blocks` blocks are spent, whichever comes first."""
    ebno_db_list = list(ebno_db_list)
    if not ebno_db_list:
        raise ValueError("SNR list is empty")
    codec = _as_codec(target, crc=crc, iterations=iterations)
    report = EvalReport(
        min_block_errors=min_block_errors, max_blocks=max_blocks, seed=seed
    )
    for point, ebno_db in enumerate(ebno_db_list):
        gen = torch.Generator()
        gen.manual_seed(
            int(np.random.SeedSequence([seed, point]).generate_state(1, np.uint64)[0] >> 1)
        )
        sigma = blocks.ebno_to_sigma(ebno_db, codec.rate)
        bit_errors = block_errors = blocks_sent = 0
        while block_errors < min_block_errors and blocks_sent < max_blocks:
            b = min(batch_blocks, max_blocks - blocks_sent)
            u = blocks.random_bits(b, codec.payload_k, gen)
            y = blocks.awgn(codec.encode(u), sigma, gen)
            diff = codec.decode_bits(y) != u.to(torch.int64)
            bit_errors += int(diff.sum())
            block_errors += int(diff.any(dim=1).sum())
            blocks_sent += b
        bits_sent = blocks_sent * codec.payload_k
        report.rows.append(
            EvalRow(
                ebno_db=float(ebno_db),
                bits_sent=bits_sent,
                bit_errors=bit_errors,
                ber=bit_errors / bits_sent,
                blocks_sent=blocks_sent,
                block_errors=block_errors,
                bler=block_errors / blocks_sent,
                seed=seed,
            )
        )
    return report


def snr_at_target_ber(
    target,
    target_ber: float = 1e-4,
    bracket: tuple = (0.0, 10.0),
    tol: float = 0.1,
    seed: int = 0,
    min_block_errors: int = 100,
    max_blocks: int = 1_000_000,
    batch_blocks: int = 4096,
    crc: CrcConfig | None = None,
    iterations: int | None = None,
) -> float:
    """Bisection on Eb/N0 for the SNR reaching `target_ber`.

    The bracket endpoints must straddle the target; otherwise a ValueError
    reports both endpoint BERs.
    """
    codec = _as_codec(target, crc=crc, iterations=iterations)
    probes = itertools.count()

    def probe(ebno_db: float) -> float:
        report = monte_carlo(
            codec,
            [ebno_db],
            min_block_errors=min_block_errors,
            max_blocks=max_blocks,
            batch_blocks=batch_blocks,
            seed=int(np.random.SeedSequence([seed, next(probes)]).generate_state(1)[0]),
        )
        return report.rows[0].ber

    lo, hi = float(bracket[0]), float(bracket[1])
    ber_lo, ber_hi = probe(lo), probe(hi)
    if not (ber_lo >= target_ber >= ber_hi):
        raise ValueError(
            f"target BER {target_ber:g} not bracketed: "
            f"BER({lo:g} dB) = {ber_lo:g}, BER({hi:g} dB) = {ber_hi:g}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if probe(mid) >= target_ber:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
