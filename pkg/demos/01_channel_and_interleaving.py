"""Walk through the basic signal chain: bits, interleaving, power
normalization, the AWGN channel at a configured Eb/N0, and hard decisions.

Run:  python3 demos/01_channel_and_interleaving.py
"""

import numpy as np
import torch

from turboae import blocks

gen = torch.Generator().manual_seed(0)

# A batch of information blocks.
u = blocks.random_bits(batch=4, length=16, gen=gen)
print("bits u[0]:         ", u[0].to(torch.int64).tolist())

# A seeded interleaver is a derangement: no entry stays in place.
spec = blocks.make_interleaver(seed=7, length=16)
print("permutation:       ", spec.perm.tolist())
assert np.all(spec.perm != np.arange(16))

u_pi = blocks.interleave(u, spec)
back = blocks.deinterleave(u_pi, spec)
print("interleave + inverse is the identity:", bool(torch.equal(back, u)))

# The energy constraint: zero mean, unit average symbol energy per batch.
raw = 3.0 * torch.randn(4, 32, generator=gen) + 1.0
x = blocks.normalize_power(raw)
print(f"after normalization: mean {float(x.mean()):+.2e}, E[x^2] {float((x**2).mean()):.6f}")

# Channel at Eb/N0 = 2 dB for a rate-1/2 code.
cfg = blocks.ChannelConfig(ebno_db=2.0, rate=0.5)
print(f"Eb/N0 {cfg.ebno_db} dB at rate {cfg.rate} -> sigma = {cfg.sigma:.4f}")
y = blocks.awgn(x, cfg.sigma, gen)
print(f"received snippet:   {[round(v, 2) for v in y[0, :6].tolist()]}")

# Soft messages with a single feature behave like LLRs: the sign is the
# hard decision (an exact 0 resolves to bit 0).
llr = torch.tensor([[-3.2, 0.1, 0.0, 2.4]])
print("hard decisions:    ", blocks.hard_decision(llr).tolist())

# Extrinsic arithmetic: what a decoder adds beyond its prior.
l_total = torch.tensor([[2.0, -1.0]])
l_prior = torch.tensor([[0.5, 0.5]])
print("extrinsic:         ", blocks.extrinsic(l_total, l_prior).tolist())
