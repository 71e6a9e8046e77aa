import numpy as np
import pytest
import torch

from conftest import TINY_NET, make_gen, tiny_parallel, tiny_serial
from turboae import blocks
from turboae.errors import ConfigError, DegenerateInputError
from turboae.models import (
    ComponentNet,
    ComponentNetConfig,
    ParallelModel,
    PowerNormalizer,
    count_net_passes,
    init_parameters,
)


class TestComponentNetConfig:
    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            ComponentNetConfig(kernel_size=4)

    def test_nonpositive_counts_rejected(self):
        with pytest.raises(ConfigError):
            ComponentNetConfig(conv_layers=0)
        with pytest.raises(ConfigError):
            ComponentNetConfig(filters=0)

    def test_unknown_activation_rejected(self):
        with pytest.raises(ConfigError):
            ComponentNetConfig(activation="swishish")


class TestComponentNet:
    def test_length_agnostic(self):
        net = ComponentNet(2, TINY_NET)
        init_parameters(net, make_gen(0))
        for k in (8, 24, 100):
            out = net(torch.randn(3, k, 2, generator=make_gen(k)))
            assert out.shape == (3, k, 1)

    def test_zero_weights_give_constant_output(self):
        net = ComponentNet(1, TINY_NET)
        with torch.no_grad():
            for p in net.parameters():
                p.zero_()
        out = net(torch.randn(2, 10, 1, generator=make_gen(1)))
        assert torch.equal(out, torch.zeros_like(out))

    def test_identity_kernel_reproduces_input_channel(self):
        cfg = ComponentNetConfig(
            conv_layers=1, filters=1, kernel_size=3, activation="identity"
        )
        net = ComponentNet(1, cfg)
        with torch.no_grad():
            net.convs[0].weight.zero_()
            net.convs[0].weight[0, 0, 1] = 1.0  # centre tap
            net.convs[0].bias.zero_()
            net.head.weight.fill_(1.0)
            net.head.bias.zero_()
        x = torch.randn(2, 12, 1, generator=make_gen(2))
        assert torch.allclose(net(x), x, atol=1e-6)

    def test_input_feature_mismatch_rejected(self):
        net = ComponentNet(3, TINY_NET)
        with pytest.raises(ValueError):
            net(torch.zeros(2, 8, 2))

    def test_seeded_init_is_reproducible(self):
        a = ComponentNet(1, TINY_NET)
        b = ComponentNet(1, TINY_NET)
        init_parameters(a, make_gen(5))
        init_parameters(b, make_gen(5))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)


class TestPowerNormalizer:
    def test_batch_statistics_in_training_mode(self):
        norm = PowerNormalizer().train()
        x = 4.0 * torch.randn(200, 16, generator=make_gen(0)) + 2.0
        out = norm(x)
        assert abs(float((out.double() ** 2).mean()) - 1.0) <= 1e-6

    def test_frozen_statistics_give_per_block_determinism(self):
        norm = PowerNormalizer()
        norm.calibrate(4.0 * torch.randn(5000, 16, generator=make_gen(1)) + 2.0)
        norm.eval()
        x = torch.randn(4, 16, generator=make_gen(2))
        one = norm(x[:1])
        both = norm(x)
        assert torch.allclose(one, both[:1])  # no batch coupling once frozen

    def test_streaming_calibration_matches_single_shot(self):
        x = 3.0 * torch.randn(1000, 8, generator=make_gen(3)) - 1.0
        a, b = PowerNormalizer(), PowerNormalizer()
        a.calibrate(x)
        b.start_calibration()
        b.train()
        b(x[:300])
        b(x[300:])
        b.finish_calibration()
        assert float(a.mu) == pytest.approx(float(b.mu), abs=1e-9)
        assert float(a.sigma) == pytest.approx(float(b.sigma), abs=1e-9)

    def test_degenerate_batch_rejected(self):
        with pytest.raises(DegenerateInputError):
            PowerNormalizer().train()(torch.ones(4, 4))


class TestParallelModel:
    def test_weight_sharing_requires_single_feature(self):
        with pytest.raises(ConfigError):
            ParallelModel(k=8, F=3, weight_sharing=True)

    def test_encode_shape_and_energy(self):
        m = tiny_parallel(k=8)
        u = blocks.random_bits(64, 8, make_gen(0))
        x = m.encode(u)
        assert x.shape == (64, 16)
        assert abs(float((x.double() ** 2).mean()) - 1.0) <= 1e-6

    def test_encode_deterministic(self):
        m = tiny_parallel(k=8)
        u = blocks.random_bits(4, 8, make_gen(1))
        assert torch.equal(m.encode(u), m.encode(u))

    def test_binarized_symbols(self):
        m = tiny_parallel(k=8, binarize_symbols=True)
        x = m.encode(blocks.random_bits(32, 8, make_gen(2)))
        assert set(x.flatten().tolist()) <= {-1.0, 1.0}
        assert float((x.double() ** 2).mean()) == 1.0

    def test_decode_shape_and_finiteness(self):
        m = tiny_parallel(k=8)
        u = blocks.random_bits(16, 8, make_gen(3))
        y = blocks.awgn(m.encode(u), 0.5, make_gen(4))
        llr = m.decode_symbols(y)
        assert llr.shape == (16, 8, 1)
        assert bool(torch.isfinite(llr).all())

    def test_final_output_single_feature_in_per_iteration_mode(self):
        m = tiny_parallel(k=8, F=4, iterations=2)
        assert m.dec2[-1].cfg.output_features == 1
        assert m.dec2[0].cfg.output_features == 4

    def test_per_iteration_mode_rejects_other_iteration_counts(self):
        m = tiny_parallel(k=8, iterations=2)
        y = torch.randn(2, 8, generator=make_gen(5))
        with pytest.raises(ValueError):
            m.decode(y, y, iterations=5)

    def test_extrinsic_consistency_in_trace(self):
        m = tiny_parallel(k=8, weight_sharing=True)
        u = blocks.random_bits(4, 8, make_gen(6))
        y = blocks.awgn(m.encode(u), 0.7, make_gen(7))
        trace = []
        m.decode(y[:, :8], y[:, 8:], trace=trace)
        prior = torch.zeros(4, 8, 1)
        spec = m.interleaver
        for step in trace:
            assert torch.equal(step["l_e1"], step["l_t1"] - prior)
            assert torch.equal(step["l_a2"], blocks.interleave(step["l_e1"], spec))
            prior = blocks.deinterleave(step["l_t2"] - step["l_a2"], spec)

    def test_iteration_is_pure_state_transition(self):
        m = tiny_parallel(k=8, weight_sharing=True).eval()
        u = blocks.random_bits(6, 8, make_gen(8))
        y = blocks.awgn(m.encode(u), 0.6, make_gen(9))
        y1, y2 = y[:, :8], y[:, 8:]
        with torch.no_grad():
            full = m.decode(y1, y2, iterations=4)
            _, state = m.decode(y1, y2, iterations=3, return_prior=True)
            stepped = m.decode(y1, y2, iterations=1, init_prior=state)
        assert torch.equal(full, stepped)

    def test_first_iteration_equals_standalone_component(self):
        m = tiny_parallel(k=8, weight_sharing=True).eval()
        u = blocks.random_bits(6, 8, make_gen(10))
        y = blocks.awgn(m.encode(u), 0.6, make_gen(11))
        trace = []
        with torch.no_grad():
            m.decode(y[:, :8], y[:, 8:], iterations=1, trace=trace)
            standalone = m.component_pass(1, y[:, :8], torch.zeros(6, 8, 1))
        assert torch.equal(trace[0]["l_t1"], standalone)

    def test_resize_keeps_weight_shapes(self):
        m = tiny_parallel(k=8)
        shapes = {n: tuple(p.shape) for n, p in m.state_dict().items()}
        m.resize(16)
        assert {n: tuple(p.shape) for n, p in m.state_dict().items()} == shapes
        u = blocks.random_bits(4, 16, make_gen(12))
        assert m.decode_symbols(m.encode(u)).shape == (4, 16, 1)

    def test_pass_counting(self):
        m = tiny_parallel(k=8, iterations=3)
        u = blocks.random_bits(4, 8, make_gen(13))
        with count_net_passes() as counts:
            y = m.encode(u)
            m.decode_symbols(y)
        assert counts["encoder"] == 2
        assert counts["decoder"] == 6

    def test_wrong_block_length_rejected(self):
        m = tiny_parallel(k=8)
        with pytest.raises(ValueError):
            m.encode(torch.zeros(2, 9))
        with pytest.raises(ValueError):
            m.decode_symbols(torch.zeros(2, 17))


class TestSerialModel:
    def test_encode_shape_energy_and_determinism(self):
        m = tiny_serial(k=8)
        u = blocks.random_bits(32, 8, make_gen(0))
        x = m.encode(u)
        assert x.shape == (32, 16)
        assert abs(float((x.double() ** 2).mean()) - 1.0) <= 1e-6
        assert torch.equal(x, m.encode(u))

    def test_coded_sequence_is_binary(self):
        m = tiny_serial(k=8)
        c = m.coded_sequence(blocks.random_bits(16, 8, make_gen(1)))
        assert set(c.flatten().tolist()) <= {-1.0, 1.0}

    def test_coded_sequence_real_when_binarizer_disabled(self):
        m = tiny_serial(k=8, binarize_coded=False)
        c = m.coded_sequence(blocks.random_bits(16, 8, make_gen(2)))
        assert len(set(c.flatten().tolist())) > 2

    def test_outer_decoder_sees_no_channel_observations(self):
        m = tiny_serial(k=8, F=3)
        # Interface check: the outer decoder accepts exactly the F_c code
        # messages, so the channel output cannot reach it.
        assert m.outer_dec.in_features == m.F_c
        assert m.inner_dec.in_features == 2 + m.F_c

    def test_outer_decoder_emits_code_and_bit_estimates(self):
        m = tiny_serial(k=8, F=3)
        assert m.outer_dec.cfg.output_features == m.F_c + 1

    def test_decode_shape(self):
        m = tiny_serial(k=8)
        u = blocks.random_bits(8, 8, make_gen(3))
        y = blocks.awgn(m.encode(u), 0.8, make_gen(4))
        llr = m.decode(y)
        assert llr.shape == (8, 8, 1)
        assert bool(torch.isfinite(llr).all())

    def test_flattened_interleaver_mode(self):
        m = tiny_serial(k=8, F=3, interleaver_mode="flattened")
        assert m.interleaver.length == 8 * 3
        u = blocks.random_bits(4, 8, make_gen(5))
        llr = m.decode(m.encode(u))
        assert llr.shape == (4, 8, 1)

    def test_optional_symbol_binarizer(self):
        m = tiny_serial(k=8, binarize_symbols=True)
        x = m.encode(blocks.random_bits(16, 8, make_gen(6)))
        assert set(x.flatten().tolist()) <= {-1.0, 1.0}

    def test_interleaved_inner_input_is_binary(self):
        m = tiny_serial(k=8)
        c = m.coded_sequence(blocks.random_bits(16, 8, make_gen(7)))
        c_pi = blocks.interleave(c, m.interleaver, m.interleaver_mode)
        assert set(c_pi.flatten().tolist()) <= {-1.0, 1.0}

    def test_resize_keeps_weight_shapes(self):
        m = tiny_serial(k=8, F=3, interleaver_mode="flattened")
        shapes = {n: tuple(p.shape) for n, p in m.state_dict().items()}
        m.resize(12)
        assert m.interleaver.length == 12 * 3
        assert {n: tuple(p.shape) for n, p in m.state_dict().items()} == shapes
        u = blocks.random_bits(4, 12, make_gen(8))
        assert m.decode(m.encode(u)).shape == (4, 12, 1)

    def test_pass_counting(self):
        m = tiny_serial(k=8, iterations=4)
        u = blocks.random_bits(4, 8, make_gen(9))
        with count_net_passes() as counts:
            y = m.encode(u)
            m.decode(y)
        assert counts["encoder"] == 2
        assert counts["decoder"] == 8
