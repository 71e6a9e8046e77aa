"""Checkpoint container: model weights plus everything needed to rebuild
and rerun a model (architecture, interleaver seed, normalization stats,
schedule position, RNG state, metrics history).

The on-disk format is a single file: an 8-byte magic, the SHA-256 of the
payload, then a pickled dict.  Save -> load -> save round-trips
byte-identically; any corruption raises :class:`CheckpointError`.
"""

from __future__ import annotations

import hashlib
import pickle
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError
from .models import ComponentNetConfig, ParallelModel, SerialModel

_MAGIC = b"TAECKPT1"
SCHEMA_VERSION = 1


@dataclass
class Checkpoint:
    arch: dict
    state: dict
    metrics: list = field(default_factory=list)
    schedule_state: dict = field(default_factory=dict)
    rng_state: bytes | None = None
    meta: dict = field(default_factory=dict)


def _net_dict(cfg: ComponentNetConfig) -> dict:
    return {
        "conv_layers": cfg.conv_layers,
        "filters": cfg.filters,
        "kernel_size": cfg.kernel_size,
        "activation": cfg.activation,
    }


def model_arch(model) -> dict:
    """Architecture record from which :func:`build_model` can rebuild."""
    common = {
        "k": model.k,
        "F": model.F,
        "iterations": model.iterations,
        "binarize_symbols": model.binarize_symbols,
        "interleaver_seed": model.interleaver.seed,
        "enc_net": _net_dict(model.enc_cfg),
        "dec_net": _net_dict(model.dec_cfg),
    }
    if isinstance(model, ParallelModel):
        return {
            "architecture": "parallel",
            "weight_sharing": model.weight_sharing,
            **common,
        }
    if isinstance(model, SerialModel):
        return {
            "architecture": "serial",
            "F_c": model.F_c,
            "binarize_coded": model.binarize_coded,
            "interleaver_mode": model.interleaver_mode,
            **common,
        }
    raise TypeError(f"unsupported model type {type(model).__name__}")


def build_model(arch: dict):
    """Construct an (uninitialized) model from an architecture record."""
    kind = arch.get("architecture")
    if kind not in ("parallel", "serial"):
        raise CheckpointError(f"unknown architecture {kind!r}")
    enc_cfg = ComponentNetConfig(**arch["enc_net"])
    dec_cfg = ComponentNetConfig(**arch["dec_net"])
    if kind == "parallel":
        return ParallelModel(
            k=arch["k"],
            F=arch["F"],
            iterations=arch["iterations"],
            weight_sharing=arch["weight_sharing"],
            binarize_symbols=arch["binarize_symbols"],
            interleaver_seed=arch["interleaver_seed"],
            enc_cfg=enc_cfg,
            dec_cfg=dec_cfg,
        )
    if kind == "serial":
        return SerialModel(
            k=arch["k"],
            F=arch["F"],
            F_c=arch["F_c"],
            iterations=arch["iterations"],
            binarize_coded=arch["binarize_coded"],
            binarize_symbols=arch["binarize_symbols"],
            interleaver_seed=arch["interleaver_seed"],
            interleaver_mode=arch["interleaver_mode"],
            enc_cfg=enc_cfg,
            dec_cfg=dec_cfg,
        )
    raise CheckpointError(f"unknown architecture {kind!r}")  # unreachable


def extract_state(model) -> dict:
    return {
        name: tensor.detach().cpu().numpy().copy()
        for name, tensor in model.state_dict().items()
    }


def load_state(model, state: dict) -> None:
    model.load_state_dict({k: torch.from_numpy(np.asarray(v)) for k, v in state.items()})


def restore_model(ckpt: Checkpoint):
    """Rebuild the checkpointed model in eval mode."""
    model = build_model(ckpt.arch)
    load_state(model, ckpt.state)
    model.eval()
    return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    payload = pickle.dumps(
        {"schema": SCHEMA_VERSION, **asdict(ckpt)}, protocol=4
    )
    digest = hashlib.sha256(payload).digest()
    Path(path).write_bytes(_MAGIC + digest + payload)


def load_checkpoint(path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(_MAGIC) + 32 or raw[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    digest = raw[len(_MAGIC) : len(_MAGIC) + 32]
    payload = raw[len(_MAGIC) + 32 :]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError(f"{path} failed its integrity check (corrupt payload)")
    try:
        record = pickle.loads(payload)
    except Exception as exc:
        raise CheckpointError(f"{path} cannot be decoded: {exc}") from exc
    schema = record.pop("schema", None)
    if schema != SCHEMA_VERSION:
        raise CheckpointError(f"{path} has unsupported schema version {schema}")
    return Checkpoint(**record)
