import numpy as np
import pytest
import torch

from turboae.models import ComponentNetConfig, ParallelModel, SerialModel, init_parameters

collect_ignore_glob = ["../examples/*"]


def make_gen(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen


@pytest.fixture
def gen():
    return make_gen(1234)


TINY_NET = ComponentNetConfig(conv_layers=2, filters=8, kernel_size=3)


def tiny_parallel(k=8, F=2, iterations=3, weight_sharing=False, seed=0, **kw):
    model = ParallelModel(
        k=k,
        F=1 if weight_sharing else F,
        iterations=iterations,
        weight_sharing=weight_sharing,
        interleaver_seed=seed,
        enc_cfg=TINY_NET,
        dec_cfg=TINY_NET,
        **kw,
    )
    init_parameters(model, make_gen(seed + 77))
    return model


def tiny_serial(k=8, F=2, iterations=3, seed=0, **kw):
    model = SerialModel(
        k=k,
        F=F,
        iterations=iterations,
        interleaver_seed=seed,
        enc_cfg=TINY_NET,
        dec_cfg=TINY_NET,
        **kw,
    )
    init_parameters(model, make_gen(seed + 78))
    return model
