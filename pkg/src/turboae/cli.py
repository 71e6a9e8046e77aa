"""Command-line front end.

Subcommands: train, pretrain, finetune, eval, sweep, plot.  Runs are
configured by a JSON key-value file (schema documented in the README);
command-line overrides win over file values, and the fully-resolved
config is persisted into the output directory next to the checkpoints
and CSVs, so a run directory is sufficient to reproduce the run.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import evaluate, training
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, TurboaeError
from .models import ComponentNetConfig, ParallelModel, SerialModel, init_parameters

ENV_OUTDIR = "TURBOAE_OUTDIR"

_NET_DEFAULTS = {"conv_layers": 2, "filters": 100, "kernel_size": 5, "activation": "elu"}


@dataclass
class RunConfig:
    """Resolved run configuration; defaults follow the standard
    hyperparameter table (rate 1/2, F = 10, 6 decoder iterations,
    encoder SNR 4 dB, decoder SNR 0.5-4 dB, batch 500-2000,
    learning rate 1e-4 down to 1e-6)."""

    k: int
    architecture: str = "parallel"
    F: int = 10
    F_c: int | None = None
    iterations: int = 6
    weight_sharing: bool = False
    binarize_symbols: bool = False
    binarize_coded: bool = True
    interleaver_seed: int | None = None
    interleaver_mode: str = "block"
    enc_net: dict = field(default_factory=lambda: dict(_NET_DEFAULTS))
    dec_net: dict = field(default_factory=lambda: dict(_NET_DEFAULTS))
    algorithm: str = "alternating"
    epochs: int = 10
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
    inference_iterations: int = 96
    snr_db_list: tuple = (0.0, 1.0, 2.0, 3.0, 4.0)
    min_block_errors: int = 100
    max_blocks: int = 1_000_000
    batch_blocks: int = 1024
    out_dir: str | None = None
    seed: int = 0


def _coerce(name: str, value, template):
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"field '{name}' must be a boolean, got {value!r}")
        return value
    if isinstance(template, int) and not isinstance(template, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"field '{name}' must be an integer, got {value!r}")
        return int(value)
    if isinstance(template, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"field '{name}' must be a number, got {value!r}")
        return float(value)
    if isinstance(template, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"field '{name}' must be a list, got {value!r}")
        return tuple(value)
    return value


def resolve_config(data: dict) -> RunConfig:
    """Validate a raw key-value mapping into a RunConfig."""
    defaults = RunConfig(k=2)  # template instance for types/defaults
    known = set(asdict(defaults))
    unknown = set(data) - known - {"n"}
    if unknown:
        raise ConfigError(f"unknown config field '{sorted(unknown)[0]}'")
    if "k" not in data:
        raise ConfigError("field 'k' is required")
    kwargs = {}
    for name, value in data.items():
        if name == "n":
            continue
        template = getattr(defaults, name)
        if name in ("F_c", "interleaver_seed", "out_dir") and value is None:
            kwargs[name] = None
        elif name in ("F_c", "interleaver_seed"):
            kwargs[name] = _coerce(name, value, 0)
        elif name == "out_dir":
            kwargs[name] = str(value)
        elif name in ("enc_net", "dec_net"):
            if not isinstance(value, dict):
                raise ConfigError(f"field '{name}' must be an object")
            bad = set(value) - set(_NET_DEFAULTS)
            if bad:
                raise ConfigError(f"field '{name}.{sorted(bad)[0]}' is unknown")
            kwargs[name] = {**_NET_DEFAULTS, **value}
        else:
            kwargs[name] = _coerce(name, value, template)
    cfg = RunConfig(**kwargs)
    if cfg.k < 2:
        raise ConfigError(f"field 'k' must be >= 2, got {cfg.k}")
    if "n" in data and data["n"] != 2 * cfg.k:
        raise ConfigError(f"field 'n' must equal 2*k = {2 * cfg.k}, got {data['n']}")
    if cfg.architecture not in ("parallel", "serial"):
        raise ConfigError(f"field 'architecture' must be parallel or serial")
    if cfg.algorithm not in ("alternating", "pretrain_gaussian"):
        raise ConfigError(
            "field 'algorithm' must be alternating or pretrain_gaussian"
        )
    if cfg.interleaver_mode not in ("block", "flattened"):
        raise ConfigError("field 'interleaver_mode' must be block or flattened")
    if cfg.weight_sharing and cfg.F != 1:
        raise ConfigError("field 'F' must be 1 when weight_sharing is true")
    return cfg


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must contain a JSON object")
    data.update(overrides or {})
    return resolve_config(data)


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _schedule(cfg: RunConfig, pretrain: bool = False) -> training.TrainSchedule:
    return training.TrainSchedule(
        epochs=cfg.epochs,
        t_enc=cfg.t_enc,
        t_dec=1000 if pretrain and cfg.t_dec == 500 else cfg.t_dec,
        batch_sizes=cfg.batch_sizes,
        learning_rates=cfg.learning_rates,
        enc_snr_db=cfg.enc_snr_db,
        dec_snr_db_range=cfg.dec_snr_db_range,
        i_pre_enc=cfg.i_pre_enc,
        i_pre_dec=cfg.i_pre_dec,
        prior_mode=cfg.prior_mode,
        eval_snr_db=cfg.eval_snr_db,
        eval_blocks=cfg.eval_blocks,
        eval_batch=cfg.eval_batch,
        calibration_blocks=cfg.calibration_blocks,
        record_timing=cfg.record_timing,
    )


def build_fresh_model(cfg: RunConfig):
    """Construct a model from a config with seeded weight initialization."""
    interleaver_seed = cfg.seed if cfg.interleaver_seed is None else cfg.interleaver_seed
    enc_cfg = ComponentNetConfig(**cfg.enc_net)
    dec_cfg = ComponentNetConfig(**cfg.dec_net)
    if cfg.architecture == "parallel":
        model = ParallelModel(
            k=cfg.k,
            F=cfg.F,
            iterations=cfg.iterations,
            weight_sharing=cfg.weight_sharing,
            binarize_symbols=cfg.binarize_symbols,
            interleaver_seed=interleaver_seed,
            enc_cfg=enc_cfg,
            dec_cfg=dec_cfg,
        )
    else:
        model = SerialModel(
            k=cfg.k,
            F=cfg.F,
            F_c=cfg.F_c,
            iterations=cfg.iterations,
            binarize_coded=cfg.binarize_coded,
            binarize_symbols=cfg.binarize_symbols,
            interleaver_seed=interleaver_seed,
            interleaver_mode=cfg.interleaver_mode,
            enc_cfg=enc_cfg,
            dec_cfg=dec_cfg,
        )
    gen = torch.Generator()
    gen.manual_seed(
        int(np.random.SeedSequence([cfg.seed, 0x1217]).generate_state(1, np.uint64)[0] >> 1)
    )
    init_parameters(model, gen)
    return model


def _out_dir(cfg: RunConfig, arg_out, command: str) -> Path:
    if arg_out:
        out = Path(arg_out)
    elif cfg.out_dir:
        out = Path(cfg.out_dir)
    else:
        out = Path(os.environ.get(ENV_OUTDIR, "runs")) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _persist_config(cfg: RunConfig, out: Path) -> None:
    resolved = asdict(cfg)
    resolved["n"] = 2 * cfg.k
    if resolved["interleaver_seed"] is None:
        resolved["interleaver_seed"] = cfg.seed
    (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def _run_pretrain_pair(cfg: RunConfig, out: Path) -> Path:
    schedule = _schedule(cfg, pretrain=True)
    seeds = [
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.seed).spawn(2)
    ]
    checkpoints = []
    for component in (1, 2):
        model = build_fresh_model(cfg)
        comp_dir = out / f"component{component}"
        ckpt = training.pretrain_gaussian(
            model, component, schedule, seeds[component - 1], out_dir=comp_dir
        )
        path = out / f"component{component}.ckpt"
        save_checkpoint(ckpt, path)
        checkpoints.append(ckpt)
        print(f"component {component}: best eval BER {ckpt.meta['best_eval_ber']:.3e}")
    model = training.assemble_iterative(
        checkpoints[0], checkpoints[1], inference_iterations=cfg.inference_iterations
    )
    from .checkpoint import Checkpoint, extract_state, model_arch

    assembled = Checkpoint(
        arch=model_arch(model),
        state=extract_state(model),
        metrics=[],
        schedule_state={},
        rng_state=None,
        meta={"seed": cfg.seed, "algorithm": "assembled"},
    )
    path = out / "assembled.ckpt"
    save_checkpoint(assembled, path)
    print(f"assembled checkpoint -> {path}")
    return path


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides_from(args))
    out = _out_dir(cfg, args.out, "train")
    _persist_config(cfg, out)
    if cfg.algorithm == "pretrain_gaussian":
        _run_pretrain_pair(cfg, out)
        return 0
    schedule = _schedule(cfg)
    if args.from_checkpoint:
        ckpt_in = load_checkpoint(args.from_checkpoint)
        if cfg.k != ckpt_in.arch["k"]:
            ckpt = training.finetune_length(
                ckpt_in, cfg.k, schedule, cfg.seed, out_dir=out
            )
        else:
            from .checkpoint import restore_model

            model = restore_model(ckpt_in)
            model.train()
            ckpt = training.train_alternating(model, schedule, cfg.seed, out_dir=out)
    else:
        model = build_fresh_model(cfg)
        ckpt = training.train_alternating(model, schedule, cfg.seed, out_dir=out)
    path = out / "checkpoint.ckpt"
    save_checkpoint(ckpt, path)
    print(f"best eval BER {ckpt.meta['best_eval_ber']:.3e}; checkpoint -> {path}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config, _overrides_from(args))
    if not cfg.weight_sharing or cfg.F != 1:
        raise ConfigError(
            "field 'weight_sharing' must be true and 'F' must be 1 for pre-training"
        )
    out = _out_dir(cfg, args.out, "pretrain")
    _persist_config(cfg, out)
    _run_pretrain_pair(cfg, out)
    return 0


def cmd_finetune(args) -> int:
    cfg = load_config(args.config, _overrides_from(args))
    ckpt_in = load_checkpoint(args.from_checkpoint)
    out = _out_dir(cfg, args.out, "finetune")
    _persist_config(cfg, out)
    schedule = _schedule(cfg)
    ckpt = training.finetune_length(ckpt_in, cfg.k, schedule, cfg.seed, out_dir=out)
    path = out / "checkpoint.ckpt"
    save_checkpoint(ckpt, path)
    print(
        f"finetuned {ckpt.meta['finetuned_from_k']} -> {cfg.k}: "
        f"best eval BER {ckpt.meta['best_eval_ber']:.3e}; checkpoint -> {path}"
    )
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    from .checkpoint import restore_model

    model = restore_model(ckpt)
    snr_list = [float(s) for s in args.snr.split(",") if s.strip() != ""]
    crc = evaluate.CrcConfig(info_len=model.k - 7) if args.crc7 else None
    report = evaluate.monte_carlo(
        model,
        snr_list,
        min_block_errors=args.min_block_errors,
        max_blocks=args.max_blocks,
        batch_blocks=args.batch_blocks,
        seed=args.seed,
        crc=crc,
        iterations=args.iterations,
    )
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.csv"
    if args.reference:
        rate = (model.k - 7) / model.n if args.crc7 else model.k / model.n
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                evaluate.REPORT_COLUMNS + ["uncoded_bpsk_ber", "normal_approx_bler"]
            )
            for row in report.rows:
                shift = row.ebno_db
                writer.writerow(
                    [getattr(row, c) for c in evaluate.REPORT_COLUMNS]
                    + [
                        evaluate.uncoded_bpsk_ber(shift),
                        evaluate.normal_approximation(model.k, model.n, shift),
                    ]
                )
    else:
        report.to_csv(path)
    for row in report.rows:
        print(
            f"{row.ebno_db:6.2f} dB  ber {row.ber:.3e}  bler {row.bler:.3e}  "
            f"({row.blocks_sent} blocks)"
        )
    print(f"report -> {path}")
    return 0


def cmd_sweep(args) -> int:
    rows = []
    for path in args.checkpoints:
        ckpt = load_checkpoint(path)
        from .checkpoint import restore_model

        model = restore_model(ckpt)
        try:
            snr = evaluate.snr_at_target_ber(
                model,
                target_ber=args.target_ber,
                bracket=(args.bracket[0], args.bracket[1]),
                tol=args.tol,
                seed=args.seed,
                min_block_errors=args.min_block_errors,
                max_blocks=args.max_blocks,
            )
            rows.append((model.k, ckpt.arch["architecture"], snr))
        except ValueError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            rows.append((model.k, ckpt.arch["architecture"], ""))
    rows.sort(key=lambda r: r[0])
    out = Path(args.out) if args.out else Path("runs") / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "architecture", "snr_at_target_db"])
        writer.writerows(rows)
    print(f"sweep -> {path}")
    return 0


def _read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows or len(rows) < 2:
        raise TurboaeError(f"{path} is empty or has no data rows")
    return rows[0], rows[1:]


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    made = []
    for path in args.csv:
        header, rows = _read_csv(path)
        stem = Path(path).stem
        out_dir = Path(args.out) if args.out else Path(path).parent
        out_dir.mkdir(parents=True, exist_ok=True)
        target = out_dir / f"{stem}.png"
        fig, ax = plt.subplots(figsize=(6, 4))
        try:
            if "ebno_db" in header:
                cols = {name: header.index(name) for name in header}
                snr = [float(r[cols["ebno_db"]]) for r in rows]
                ax.semilogy(snr, [float(r[cols["ber"]]) for r in rows], "o-", label="BER")
                ax.semilogy(snr, [float(r[cols["bler"]]) for r in rows], "s-", label="BLER")
                for extra in ("uncoded_bpsk_ber", "normal_approx_bler"):
                    if extra in cols:
                        ax.semilogy(
                            snr, [float(r[cols[extra]]) for r in rows], "--", label=extra
                        )
                ax.set_xlabel("Eb/N0 (dB)")
                ax.set_ylabel("error rate")
            elif "eval_ber" in header:
                cols = {name: header.index(name) for name in header}
                ber = [float(r[cols["eval_ber"]]) for r in rows]
                ax.semilogy(evaluate.moving_average(ber, 10), label="eval BER (mov. avg)")
                ax.semilogy(ber, alpha=0.3, label="eval BER")
                ax.set_xlabel("phase index")
                ax.set_ylabel("BER")
            else:
                raise TurboaeError(f"{path}: unrecognized CSV header {header}")
        except (ValueError, IndexError) as exc:
            plt.close(fig)
            raise TurboaeError(f"{path}: malformed CSV ({exc})") from exc
        ax.grid(True, which="both", alpha=0.4)
        ax.legend()
        fig.tight_layout()
        fig.savefig(target, dpi=150)
        plt.close(fig)
        made.append(target)
        print(f"plot -> {target}")
    return 0 if made else 1


def _overrides_from(args) -> dict:
    overrides = _parse_overrides(getattr(args, "set", None))
    for name in ("k", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return overrides


def _add_train_like(sub, name, func, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("config", help="path to a JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (JSON value)")
    p.add_argument("--k", type=int, help="override the block length")
    p.add_argument("--seed", type=int, help="override the global seed")
    p.add_argument("--out", help="output directory")
    if name in ("train", "finetune"):
        p.add_argument("--from-checkpoint", dest="from_checkpoint",
                       required=(name == "finetune"),
                       help="warm-start from an existing checkpoint")
    p.set_defaults(func=func)
    return p


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turboae",
        description="Train and evaluate parallel/serial turbo-autoencoder channel codes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_train_like(sub, "train", cmd_train, "run the alternating training algorithm")
    _add_train_like(sub, "pretrain", cmd_pretrain,
                    "component-wise Gaussian pre-training plus assembly")
    _add_train_like(sub, "finetune", cmd_finetune,
                    "transfer a checkpoint to a new block length and fine-tune")

    p = sub.add_parser("eval", help="Monte-Carlo BER/BLER evaluation of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--snr", default="0,1,2,3,4", help="comma-separated Eb/N0 list (dB)")
    p.add_argument("--min-block-errors", type=int, default=100)
    p.add_argument("--max-blocks", type=int, default=1_000_000)
    p.add_argument("--batch-blocks", type=int, default=1024)
    p.add_argument("--iterations", type=int, default=None,
                   help="decoder iterations (weight-sharing models only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crc7", action="store_true",
                   help="embed CRC-7 and decode with bit flipping")
    p.add_argument("--reference", action="store_true",
                   help="append uncoded-BPSK and normal-approximation columns")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="SNR at a target BER for several checkpoints")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--target-ber", type=float, default=1e-4)
    p.add_argument("--bracket", type=float, nargs=2, default=(0.0, 10.0))
    p.add_argument("--tol", type=float, default=0.1)
    p.add_argument("--min-block-errors", type=int, default=100)
    p.add_argument("--max-blocks", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render BER/BLER curves or training curves")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", help="output directory for images")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TurboaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
