#!/usr/bin/env python3
# Hand-written backpropagation vs central finite differences, block by block.

# %%
import numpy as np

from dialogact.neural import ModelParams, backward, forward, init_params
from dialogact.numerics import batch_cross_entropy, finite_diff_grad, relative_error

rng = np.random.default_rng(0)
V, e, h, u, K, L = 6, 4, 3, 5, 3, 7
params = init_params(rng.normal(0, 0.5, (V + 1, e)), K, h, u, seed=0, dtype=np.float64)
for name, arr in params.named().items():
    if name != "embedding":
        arr[...] = rng.normal(0, 0.5, arr.shape)

mask = rng.random((4, L)) < 0.7
mask[:, 0] = True
ids = np.where(mask, rng.integers(1, V + 1, (4, L)), 0)
bow = (rng.random((4, V)) < 0.4).astype(float)
labels = rng.integers(0, K, 4)
batch = (ids, mask, bow)

# %% analytic gradients
probs, cache = forward(params, batch)
grads = backward(cache, labels).named()

# %% numerical gradients, one block at a time
names = list(params.named())


def block_loss(name, flat):
    p = params.copy()
    p.named()[name][...] = flat.reshape(p.named()[name].shape)
    out, _ = forward(p, batch)
    return float(np.mean(batch_cross_entropy(out, labels)))


for name in names:
    theta = params.named()[name].ravel()
    num = finite_diff_grad(lambda t: block_loss(name, t), theta)
    print(f"{name:12s} rel. error {relative_error(grads[name].ravel(), num):.2e}")
