import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from turboae import blocks
from turboae.errors import DegenerateInputError

# Independent evaluation of sqrt(1 / (2 * 0.5 * 10^0.3)), frozen.
SIGMA_3DB_HALF_RATE = 0.7079457843841379


class TestEbnoToSigma:
    def test_zero_db_half_rate_is_one(self):
        assert blocks.ebno_to_sigma(0.0, 0.5) == 1.0

    def test_three_db_half_rate(self):
        assert blocks.ebno_to_sigma(3.0, 0.5) == pytest.approx(
            SIGMA_3DB_HALF_RATE, abs=1e-12
        )

    def test_noise_power_halves_every_three_db(self):
        for e in (-2.0, 0.0, 1.7, 5.0):
            s0 = blocks.ebno_to_sigma(e, 0.5)
            s1 = blocks.ebno_to_sigma(e + 10 * np.log10(2.0), 0.5)
            assert s1**2 == pytest.approx(s0**2 / 2, rel=1e-12)

    def test_noiseless_limit(self):
        assert blocks.ebno_to_sigma(300.0, 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_strictly_decreasing_in_ebno_and_rate(self):
        ebnos = np.linspace(-5, 10, 31)
        sigmas = [blocks.ebno_to_sigma(e, 0.5) for e in ebnos]
        assert all(a > b for a, b in zip(sigmas, sigmas[1:]))
        rates = np.linspace(0.1, 1.0, 10)
        sigmas_r = [blocks.ebno_to_sigma(2.0, r) for r in rates]
        assert all(a > b for a, b in zip(sigmas_r, sigmas_r[1:]))

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(ValueError):
            blocks.ebno_to_sigma(0.0, 0.0)
        with pytest.raises(ValueError):
            blocks.ebno_to_sigma(0.0, -0.5)

    def test_channel_config_sigma(self):
        cfg = blocks.ChannelConfig(ebno_db=0.0, rate=0.5)
        assert cfg.sigma == 1.0


class TestAwgn:
    def test_zero_sigma_is_identity(self):
        gen = torch.Generator().manual_seed(0)
        x = torch.randn(4, 10, generator=gen)
        y = blocks.awgn(x, 0.0, gen)
        assert torch.equal(y, x)

    def test_same_seed_identical(self):
        x = torch.randn(8, 16, generator=torch.Generator().manual_seed(3))
        y1 = blocks.awgn(x, 0.7, torch.Generator().manual_seed(99))
        y2 = blocks.awgn(x, 0.7, torch.Generator().manual_seed(99))
        assert torch.equal(y1, y2)

    def test_empirical_variance(self):
        gen = torch.Generator().manual_seed(7)
        x = torch.zeros(1000, 1000)
        y = blocks.awgn(x, 1.0, gen)
        assert 0.995 <= float((y - x).var()) <= 1.005

    def test_rowwise_sigma_broadcast(self):
        gen = torch.Generator().manual_seed(5)
        x = torch.zeros(2000, 64)
        sigma = torch.tensor([[0.1]] * 1000 + [[2.0]] * 1000)
        y = blocks.awgn(x, sigma, gen)
        assert float(y[:1000].std()) < 0.2
        assert float(y[1000:].std()) > 1.5

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            blocks.awgn(torch.zeros(2, 2), -1.0, torch.Generator())

    def test_numpy_path(self):
        rng = np.random.default_rng(11)
        x = np.zeros((100, 100))
        y = blocks.awgn(x, 0.5, rng)
        assert y.shape == x.shape
        assert abs(y.std() - 0.5) < 0.02


class TestNormalizePower:
    def test_fixed_point(self):
        gen = torch.Generator().manual_seed(2)
        x = torch.randn(64, 32, generator=gen)
        x = blocks.normalize_power(x)
        again = blocks.normalize_power(x)
        assert torch.allclose(again, x, atol=1e-6)

    def test_two_level_batch(self):
        x = torch.tensor([[-2.0, 2.0], [2.0, -2.0]])
        out = blocks.normalize_power(x)
        assert torch.allclose(out, torch.tensor([[-1.0, 1.0], [1.0, -1.0]]))

    def test_unit_second_moment_bound(self):
        gen = torch.Generator().manual_seed(4)
        for _ in range(5):
            x = 3.0 * torch.randn(500, 32, generator=gen) + 1.5
            out = blocks.normalize_power(x)
            assert abs(float((out.double() ** 2).mean()) - 1.0) <= 1e-6
            assert abs(float(out.double().mean())) <= 1e-6

    def test_constant_batch_rejected(self):
        with pytest.raises(DegenerateInputError):
            blocks.normalize_power(torch.full((10, 10), 3.0))

    def test_numpy_path(self):
        rng = np.random.default_rng(0)
        out = blocks.normalize_power(rng.normal(2.0, 5.0, size=(200, 16)))
        assert abs((out**2).mean() - 1.0) <= 1e-6


class TestInterleaver:
    def test_deterministic_from_seed(self):
        a = blocks.make_interleaver(123, 64)
        b = blocks.make_interleaver(123, 64)
        assert np.array_equal(a.perm, b.perm)

    def test_is_derangement(self):
        spec = blocks.make_interleaver(5, 33)
        assert np.all(spec.perm != np.arange(33))

    def test_inverse_composes_to_identity(self):
        spec = blocks.make_interleaver(9, 40)
        assert np.array_equal(spec.perm[spec.inv_perm], np.arange(40))

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            blocks.make_interleaver(0, 1)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), length=st.integers(2, 512))
    def test_derangement_and_roundtrip_property(self, seed, length):
        spec = blocks.make_interleaver(seed, length)
        assert np.all(spec.perm != np.arange(length))
        v = np.random.default_rng(seed).normal(size=(3, length))
        assert np.allclose(blocks.deinterleave(blocks.interleave(v, spec), spec), v)


class TestInterleaveOp:
    def test_roundtrip_3d(self):
        spec = blocks.make_interleaver(3, 16)
        v = torch.randn(5, 16, 4, generator=torch.Generator().manual_seed(1))
        assert torch.equal(blocks.deinterleave(blocks.interleave(v, spec), spec), v)

    def test_block_mode_preserves_feature_columns_as_sets(self):
        spec = blocks.make_interleaver(3, 12)
        v = torch.arange(12 * 3, dtype=torch.float32).reshape(1, 12, 3)
        out = blocks.interleave(v, spec)
        for f in range(3):
            assert sorted(out[0, :, f].tolist()) == sorted(v[0, :, f].tolist())

    def test_flattened_with_single_feature_equals_block(self):
        spec = blocks.make_interleaver(8, 10)
        v = torch.randn(4, 10, 1, generator=torch.Generator().manual_seed(2))
        assert torch.equal(
            blocks.interleave(v, spec, "block"), blocks.interleave(v, spec, "flattened")
        )

    def test_flattened_roundtrip(self):
        spec = blocks.make_interleaver(8, 30)
        v = torch.randn(4, 10, 3, generator=torch.Generator().manual_seed(2))
        out = blocks.interleave(v, spec, "flattened")
        assert torch.equal(blocks.deinterleave(out, spec, "flattened"), v)
        assert not torch.equal(out, v)

    def test_length_mismatch_rejected(self):
        spec = blocks.make_interleaver(1, 8)
        with pytest.raises(ValueError):
            blocks.interleave(torch.zeros(2, 9), spec)
        with pytest.raises(ValueError):
            blocks.interleave(torch.zeros(2, 9, 2), spec, "flattened")

    def test_unknown_mode_rejected(self):
        spec = blocks.make_interleaver(1, 8)
        with pytest.raises(ValueError):
            blocks.interleave(torch.zeros(2, 8), spec, "diagonal")


class TestExtrinsic:
    def test_reference_values(self):
        out = blocks.extrinsic(
            torch.tensor([[2.0, -1.0]]), torch.tensor([[0.5, 0.5]])
        )
        assert torch.allclose(out, torch.tensor([[1.5, -1.5]]))

    def test_zero_prior_passthrough(self):
        l = torch.randn(3, 6, generator=torch.Generator().manual_seed(0))
        assert torch.equal(blocks.extrinsic(l, torch.zeros_like(l)), l)

    def test_full_cancellation(self):
        l = torch.randn(3, 6, generator=torch.Generator().manual_seed(1))
        assert torch.equal(blocks.extrinsic(l, l), torch.zeros_like(l))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            blocks.extrinsic(torch.zeros(2, 3), torch.zeros(2, 4))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_idempotent_reconstruction(self, seed):
        g = torch.Generator().manual_seed(seed)
        a = torch.randn(2, 5, generator=g)
        b = torch.randn(2, 5, generator=g)
        e = blocks.extrinsic(a, b)
        assert torch.allclose(blocks.extrinsic(e + b, b), e)


class TestHardDecision:
    def test_reference_values(self):
        out = blocks.hard_decision(torch.tensor([[-3.2, 0.1]]))
        assert out.tolist() == [[0, 1]]

    def test_tie_breaks_to_zero(self):
        assert blocks.hard_decision(torch.tensor([[0.0]])).tolist() == [[0]]

    def test_antisymmetry_without_ties(self):
        g = torch.Generator().manual_seed(3)
        l = torch.randn(4, 9, generator=g)
        l[l == 0] = 0.5
        flipped = blocks.hard_decision(-l)
        assert torch.equal(flipped, 1 - blocks.hard_decision(l))

    def test_trailing_feature_dim(self):
        l = torch.tensor([[[1.0], [-1.0]]])
        assert blocks.hard_decision(l).tolist() == [[1, 0]]

    def test_multifeature_rejected(self):
        with pytest.raises(ValueError):
            blocks.hard_decision(torch.zeros(2, 3, 2))

    def test_numpy_path(self):
        assert blocks.hard_decision(np.array([[0.2, -0.2]])).tolist() == [[1, 0]]
