"""The saturated straight-through binarizer: sign in the forward pass, a
masked identity in the backward pass (gradient only where |x| < 1).

Run:  python3 demos/02_ste_binarization.py
"""

import torch

from turboae import ste

x = torch.tensor([-2.0, -0.9, -0.1, 0.0, 0.4, 1.0, 3.0], requires_grad=True)

# Forward: strictly binary output; sign(0) is pinned to +1.
b = ste.binarize(x)
print("input:   ", x.detach().tolist())
print("binary:  ", b.detach().tolist())

# Backward: the surrogate gradient passes only inside the open interval
# (-1, 1); the boundary |x| = 1 is already saturated.
b.sum().backward()
print("gradient:", x.grad.tolist())

# The same mask, as a standalone function:
up = torch.ones(7)
print("mask:    ", ste.binarize_backward(x.detach(), up).tolist())

# Inside a model this lets an encoder output be forced to BPSK while
# training end-to-end: gradients simply skip the saturated symbols.
w = torch.tensor([0.5, 1.0, -2.0, 1.0, 1.0, 1.0, 0.25])
x2 = x.detach().clone().requires_grad_(True)
loss = (ste.binarize(x2) * w).sum()
loss.backward()
print("chain rule through a weighted sum:", x2.grad.tolist())
