"""Learned turbo channel codes: parallel and serial autoencoder
architectures, straight-through binarization, Gaussian-prior accelerated
training, and a Monte-Carlo evaluation harness."""

from .blocks import (
    ChannelConfig,
    InterleaverSpec,
    awgn,
    deinterleave,
    ebno_to_sigma,
    extrinsic,
    hard_decision,
    interleave,
    make_interleaver,
    normalize_power,
    random_bits,
)
from .checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateInputError,
    TrainingDivergedError,
    TurboaeError,
)
from .evaluate import (
    CrcConfig,
    EvalReport,
    crc_attach,
    crc_bitflip_decode,
    crc_check,
    monte_carlo,
    moving_average,
    normal_approximation,
    snr_at_target_ber,
    uncoded_bpsk_ber,
)
from .models import ComponentNetConfig, ParallelModel, SerialModel, count_net_passes
from .priors import PriorSpec, estimate_mi, j_forward, j_inverse, sample_priors
from .ste import binarize, binarize_backward, binarize_forward
from .training import (
    TrainSchedule,
    assemble_iterative,
    evaluate_ber,
    finetune_length,
    pretrain_gaussian,
    train_alternating,
)

__version__ = "0.1.0"
