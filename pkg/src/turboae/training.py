"""Training algorithms: alternating encoder/decoder optimization, Gaussian
a-priori component pre-training, iterative assembly of pre-trained
components, and block-length transfer with fine-tuning.

All loops are deterministic given (schedule, seed) in single-worker mode;
metrics are appended to a CSV per epoch with the fixed column order
epoch, phase, loss, eval_ber, wall_seconds.  Wall time is only recorded
when the schedule asks for it, because timing would break byte-level
reproducibility of the metrics file.
"""

from __future__ import annotations

import copy
import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F_t

from . import blocks
from .checkpoint import Checkpoint, extract_state, load_state, model_arch, restore_model
from .errors import CheckpointError, ConfigError, TrainingDivergedError
from .models import ParallelModel, PowerNormalizer, init_parameters
from .priors import PriorSpec, sample_priors

METRICS_COLUMNS = ["epoch", "phase", "loss", "eval_ber", "wall_seconds"]


@dataclass
class TrainSchedule:
    """Hyperparameters of the alternating training algorithm.

    Batch size and learning rate are staged schedules applied over equal
    fractions of the epoch budget; the learning rate must be
    non-increasing.
    """

    epochs: int
    t_enc: int = 100
    t_dec: int = 500
    batch_sizes: tuple = (500, 1000, 2000)
    learning_rates: tuple = (1e-4, 1e-5, 1e-6)
    enc_snr_db: float = 4.0
    dec_snr_db_range: tuple = (0.5, 4.0)
    i_pre_enc: tuple = (0.8, 1.0)
    i_pre_dec: tuple = (0.0, 1.0)
    prior_mode: str = "paper_literal"
    eval_snr_db: float = 4.0
    eval_blocks: int = 4096
    eval_batch: int = 2048
    calibration_blocks: int = 2 ** 14
    record_timing: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.t_enc < 0 or self.t_dec < 0:
            raise ConfigError("epochs must be >= 1 and step counts non-negative")
        if len(self.batch_sizes) != len(self.learning_rates):
            raise ConfigError("batch_sizes and learning_rates must have equal length")
        if any(b < 1 for b in self.batch_sizes):
            raise ConfigError("batch sizes must be positive")
        lrs = list(self.learning_rates)
        if any(b > a for a, b in zip(lrs, lrs[1:])):
            raise ConfigError("learning-rate schedule must be non-increasing")

    def stage(self, epoch: int) -> int:
        n_stages = len(self.batch_sizes)
        return min(epoch * n_stages // self.epochs, n_stages - 1)


# Default schedule for Gaussian pre-training: the only change against the
# standard algorithm is the higher decoder update count per epoch.
def pretrain_schedule(epochs: int, **kw) -> TrainSchedule:
    kw.setdefault("t_dec", 1000)
    return TrainSchedule(epochs=epochs, **kw)


def _torch_generator(seed_seq: np.random.SeedSequence) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed_seq.generate_state(1, np.uint64)[0] >> 1))
    return gen


def _spawn_generators(seed: int, n: int) -> list[torch.Generator]:
    return [_torch_generator(child) for child in np.random.SeedSequence(seed).spawn(n)]


def _check_unit_power(x: torch.Tensor) -> None:
    energy = float((x.detach().double() ** 2).mean())
    assert abs(energy - 1.0) <= 1e-6, f"symbol energy {energy} violates unit bound"


def _rowwise_sigma(rate: float, snr_range: tuple, batch: int, gen) -> torch.Tensor:
    lo, hi = snr_range
    ebno = lo + (hi - lo) * torch.rand(batch, 1, generator=gen)
    return torch.sqrt(1.0 / (2.0 * rate * torch.pow(10.0, ebno / 10.0)))


def _bce(llr: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
    return F_t.binary_cross_entropy_with_logits(llr.squeeze(-1), u)


def evaluate_ber(
    model,
    snr_db: float,
    n_blocks: int,
    seed: int,
    batch: int = 2048,
    iterations: int | None = None,
) -> float:
    """Fixed-size Monte-Carlo BER of a model (monitoring helper)."""
    gen = _torch_generator(np.random.SeedSequence(seed))
    sigma = blocks.ebno_to_sigma(snr_db, model.rate)
    errors = 0
    total = 0
    with torch.no_grad():
        remaining = n_blocks
        while remaining > 0:
            b = min(batch, remaining)
            u = blocks.random_bits(b, model.k, gen)
            x = model.encode(u)
            y = blocks.awgn(x, sigma, gen)
            llr = model.decode_symbols(y, iterations=iterations)
            errors += int((blocks.hard_decision(llr) != u.to(torch.int64)).sum())
            total += b * model.k
            remaining -= b
    return errors / total


def _metrics_writer(out_dir):
    if out_dir is None:
        return None, None
    path = Path(out_dir) / "metrics.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="")
    writer = csv.writer(fh)
    writer.writerow(METRICS_COLUMNS)
    fh.flush()
    return fh, writer


def _emit(row: dict, metrics: list, writer, fh) -> None:
    metrics.append(row)
    if writer is not None:
        writer.writerow([row[c] for c in METRICS_COLUMNS])
        fh.flush()


class _BestTracker:
    def __init__(self, model):
        self.model = model
        self.ber = float("inf")
        self.state = None

    def offer(self, ber: float) -> None:
        if ber < self.ber:
            self.ber = ber
            self.state = copy.deepcopy(self.model.state_dict())

    def restore(self) -> None:
        if self.state is not None:
            self.model.load_state_dict(self.state)


def calibrate_model(model, seed: int, n_blocks: int = 2 ** 14, batch: int = 2048) -> None:
    """Freeze normalization statistics from a large calibration sample so
    eval-mode encoding is a deterministic per-block map."""
    gen = _torch_generator(np.random.SeedSequence(seed))
    norms = [m for m in model.modules() if isinstance(m, PowerNormalizer)]
    for norm in norms:
        norm.start_calibration()
    was_training = model.training
    model.train()
    with torch.no_grad():
        remaining = n_blocks
        while remaining > 0:
            b = min(batch, remaining)
            model.encode(blocks.random_bits(b, model.k, gen))
            remaining -= b
    for norm in norms:
        norm.finish_calibration()
    model.train(was_training)


def _finish_checkpoint(model, schedule, seed, metrics, tracker, gen_train, meta):
    tracker.restore()
    calib_seed = int(np.random.SeedSequence([seed, 0xCA11B]).generate_state(1)[0])
    calibrate_model(model, calib_seed, n_blocks=schedule.calibration_blocks)
    meta = {"seed": seed, "best_eval_ber": tracker.ber, **meta}
    return Checkpoint(
        arch=model_arch(model),
        state=extract_state(model),
        metrics=metrics,
        schedule_state={"epochs_done": schedule.epochs, "stage": schedule.stage(schedule.epochs - 1)},
        rng_state=bytes(gen_train.get_state().numpy().tobytes()),
        meta=meta,
    )


def train_alternating(
    model,
    schedule: TrainSchedule,
    seed: int,
    out_dir=None,
    eval_initial: bool = False,
) -> Checkpoint:
    """Alternating encoder/decoder training.

    Per epoch, `t_enc` gradient steps update only the encoder networks at
    the fixed encoder SNR, then `t_dec` steps update only the decoder
    networks with one SNR draw per block from the decoder range.  The loss
    is binary cross-entropy between sigmoid of the final soft estimates
    and the bits.  The best checkpoint by per-epoch evaluation BER is
    retained; its normalization statistics are frozen at the end.
    """
    gen_train, gen_eval_base = _spawn_generators(seed, 2)
    eval_seed = int(np.random.SeedSequence([seed, 0xE7A1]).generate_state(1)[0])
    opt_enc = torch.optim.Adam(model.encoder_parameters())
    opt_dec = torch.optim.Adam(model.decoder_parameters())
    fh, writer = _metrics_writer(out_dir)
    metrics: list[dict] = []
    tracker = _BestTracker(model)
    model.train()

    def step(u, sigma, opt):
        x = model.encode(u)
        _check_unit_power(x)
        y = blocks.awgn(x, sigma, gen_train)
        loss = _bce(model.decode_symbols(y), u)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                f"loss became {loss.detach().item()} (epoch {epoch}, phase {phase})"
            )
        model.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        return float(loss.detach())

    epoch, phase = 0, "init"
    if eval_initial:
        ber0 = evaluate_ber(
            model, schedule.eval_snr_db, schedule.eval_blocks, eval_seed,
            batch=schedule.eval_batch,
        )
        tracker.offer(ber0)
        _emit(
            {"epoch": 0, "phase": "init", "loss": 0.0, "eval_ber": ber0, "wall_seconds": 0.0},
            metrics, writer, fh,
        )

    try:
        for epoch in range(1, schedule.epochs + 1):
            stage = schedule.stage(epoch - 1)
            batch = schedule.batch_sizes[stage]
            lr = schedule.learning_rates[stage]
            for opt in (opt_enc, opt_dec):
                for group in opt.param_groups:
                    group["lr"] = lr
            for phase, steps, opt in (
                ("enc", schedule.t_enc, opt_enc),
                ("dec", schedule.t_dec, opt_dec),
            ):
                t0 = time.perf_counter()
                losses = []
                for _ in range(steps):
                    u = blocks.random_bits(batch, model.k, gen_train)
                    if phase == "enc":
                        sigma = blocks.ebno_to_sigma(schedule.enc_snr_db, model.rate)
                    else:
                        sigma = _rowwise_sigma(
                            model.rate, schedule.dec_snr_db_range, batch, gen_train
                        )
                    losses.append(step(u, sigma, opt))
                ber = evaluate_ber(
                    model, schedule.eval_snr_db, schedule.eval_blocks,
                    eval_seed + epoch, batch=schedule.eval_batch,
                )
                if phase == "dec":
                    tracker.offer(ber)
                wall = time.perf_counter() - t0 if schedule.record_timing else 0.0
                _emit(
                    {
                        "epoch": epoch,
                        "phase": phase,
                        "loss": sum(losses) / len(losses) if losses else 0.0,
                        "eval_ber": ber,
                        "wall_seconds": wall,
                    },
                    metrics, writer, fh,
                )
    finally:
        if fh is not None:
            fh.close()
    return _finish_checkpoint(
        model, schedule, seed, metrics, tracker, gen_train, {"algorithm": "alternating"}
    )


def pretrain_gaussian(
    model: ParallelModel,
    component_id: int,
    schedule: TrainSchedule,
    seed: int,
    out_dir=None,
) -> Checkpoint:
    """Component-wise pre-training with Gaussian a-priori messages.

    Trains encoder/decoder `component_id` in isolation: the decoder runs a
    single pass per step on (y_i, l^A) where l^A is sampled at a target
    information level (encoder phases draw from `i_pre_enc`, decoder
    phases from `i_pre_dec`).  Requires the weight-sharing F = 1 model so
    the assembled decoder can iterate arbitrarily at inference.
    """
    if not isinstance(model, ParallelModel):
        raise ConfigError("Gaussian pre-training applies to the parallel model")
    if not model.weight_sharing or model.F != 1:
        raise ConfigError("pre-training requires weight_sharing=True and F=1")
    if component_id not in (1, 2):
        raise ConfigError(f"component_id must be 1 or 2, got {component_id}")

    enc = model.enc1 if component_id == 1 else model.enc2
    dec = model.dec1 if component_id == 1 else model.dec2
    gen_train, _ = _spawn_generators(seed, 2)
    eval_seed = int(np.random.SeedSequence([seed, 0xE7A1]).generate_state(1)[0])
    opt_enc = torch.optim.Adam(enc.parameters())
    opt_dec = torch.optim.Adam(dec.parameters())
    fh, writer = _metrics_writer(out_dir)
    metrics: list[dict] = []
    model.train()

    def component_ber(snr_db: float, i_pre: float, eval_seed_: int) -> float:
        gen = _torch_generator(np.random.SeedSequence(eval_seed_))
        sigma = blocks.ebno_to_sigma(snr_db, model.rate)
        errors = 0
        total = 0
        with torch.no_grad():
            remaining = schedule.eval_blocks
            while remaining > 0:
                b = min(schedule.eval_batch, remaining)
                u = blocks.random_bits(b, model.k, gen)
                y = blocks.awgn(model.component_encode(component_id, u), sigma, gen)
                if i_pre > 0:
                    l_a = sample_priors(
                        u, PriorSpec(i_pre, schedule.prior_mode), gen
                    )
                else:
                    l_a = torch.zeros(b, model.k, 1)
                llr = model.component_pass(component_id, y, l_a)
                errors += int((blocks.hard_decision(llr) != u.to(torch.int64)).sum())
                total += b * model.k
                remaining -= b
        return errors / total

    best = {"ber": float("inf"), "state": None}
    epoch, phase = 0, "init"

    def step(u, sigma, i_pre_range, opt):
        x = model.component_encode(component_id, u)
        _check_unit_power(x)
        y = blocks.awgn(x, sigma, gen_train)
        l_a = sample_priors(u, PriorSpec(i_pre_range, schedule.prior_mode), gen_train)
        loss = _bce(model.component_pass(component_id, y, l_a), u)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                f"loss became {loss.detach().item()} (epoch {epoch}, phase {phase})"
            )
        model.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        return float(loss.detach())

    try:
        for epoch in range(1, schedule.epochs + 1):
            stage = schedule.stage(epoch - 1)
            batch = schedule.batch_sizes[stage]
            lr = schedule.learning_rates[stage]
            for opt in (opt_enc, opt_dec):
                for group in opt.param_groups:
                    group["lr"] = lr
            for phase, steps, opt in (
                ("enc", schedule.t_enc, opt_enc),
                ("dec", schedule.t_dec, opt_dec),
            ):
                t0 = time.perf_counter()
                losses = []
                for _ in range(steps):
                    u = blocks.random_bits(batch, model.k, gen_train)
                    if phase == "enc":
                        sigma = blocks.ebno_to_sigma(schedule.enc_snr_db, model.rate)
                        i_pre_range = schedule.i_pre_enc
                    else:
                        sigma = _rowwise_sigma(
                            model.rate, schedule.dec_snr_db_range, batch, gen_train
                        )
                        i_pre_range = schedule.i_pre_dec
                    losses.append(step(u, sigma, i_pre_range, opt))
                ber = component_ber(schedule.eval_snr_db, 0.0, eval_seed + epoch)
                if phase == "dec" and ber < best["ber"]:
                    best["ber"] = ber
                    best["state"] = copy.deepcopy(model.state_dict())
                wall = time.perf_counter() - t0 if schedule.record_timing else 0.0
                _emit(
                    {
                        "epoch": epoch,
                        "phase": phase,
                        "loss": sum(losses) / len(losses) if losses else 0.0,
                        "eval_ber": ber,
                        "wall_seconds": wall,
                    },
                    metrics, writer, fh,
                )
    finally:
        if fh is not None:
            fh.close()

    if best["state"] is not None:
        model.load_state_dict(best["state"])
    calib_seed = int(np.random.SeedSequence([seed, 0xCA11B]).generate_state(1)[0])
    calibrate_model(model, calib_seed, n_blocks=schedule.calibration_blocks)
    return Checkpoint(
        arch=model_arch(model),
        state=extract_state(model),
        metrics=metrics,
        schedule_state={"epochs_done": schedule.epochs, "stage": schedule.stage(schedule.epochs - 1)},
        rng_state=bytes(gen_train.get_state().numpy().tobytes()),
        meta={
            "seed": seed,
            "best_eval_ber": best["ber"],
            "algorithm": "pretrain_gaussian",
            "component": component_id,
        },
    )


def assemble_iterative(
    ckpt1: Checkpoint, ckpt2: Checkpoint, inference_iterations: int = 96
) -> ParallelModel:
    """Combine two pre-trained component checkpoints into the full
    iterative decoder; no retraining is required to run it."""
    for i, ckpt in ((1, ckpt1), (2, ckpt2)):
        if ckpt.meta.get("component") != i:
            raise CheckpointError(f"checkpoint {i} was not pre-trained as component {i}")
        if ckpt.arch.get("architecture") != "parallel" or not ckpt.arch.get("weight_sharing"):
            raise CheckpointError("assembly needs weight-sharing parallel components")
    for key in ("k", "interleaver_seed", "F", "enc_net", "dec_net", "binarize_symbols"):
        if ckpt1.arch[key] != ckpt2.arch[key]:
            raise CheckpointError(
                f"incompatible checkpoints: {key} differs "
                f"({ckpt1.arch[key]!r} vs {ckpt2.arch[key]!r})"
            )
    arch = dict(ckpt1.arch)
    arch["iterations"] = inference_iterations
    from .checkpoint import build_model  # local import keeps module load light

    model = build_model(arch)
    merged = {}
    for name in extract_state(model):
        source = ckpt1 if name.split(".")[0] in ("enc1", "dec1", "norm1") else ckpt2
        merged[name] = source.state[name]
    load_state(model, merged)
    model.eval()
    return model


def finetune_length(
    ckpt: Checkpoint, k_new: int, schedule: TrainSchedule, seed: int, out_dir=None
) -> Checkpoint:
    """Transfer a trained model to a new block length and fine-tune.

    The interleaver is regenerated at the new length (same seed) and the
    normalization is recalibrated; all weight shapes carry over because
    the component networks are convolutional.  The starting point is
    evaluated too, so the returned best checkpoint is never worse than
    the transferred-untuned model on the evaluation stream.
    """
    model = restore_model(ckpt)
    k_old = model.k
    model.resize(k_new)
    out = train_alternating(model, schedule, seed, out_dir=out_dir, eval_initial=True)
    out.meta["finetuned_from_k"] = k_old
    return out
