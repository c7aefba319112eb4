# A tour of the small reverse-mode autodiff core everything else is built on.
# Every value is a 2-D float64 matrix; gradients accumulate on leaves.
import numpy as np

from mgbcc import diffcore as dc

rng = np.random.default_rng(0)

# a parameter is a leaf tensor with requires_grad=True
W = dc.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
x = rng.normal(size=(5, 3))
target = rng.normal(size=(5, 2))

# forward: relu(x W), z-scored per column, then summed squared error vs a target
h = dc.standardize(dc.relu(x @ W))
loss = dc.squared_error(h, target)
print("loss", loss.item())

loss.backward()
print("dloss/dW\n", W.grad)

# central differences agree with backward()
num = np.zeros_like(W.value)
for i, j in np.ndindex(W.shape):
    old = W.value[i, j]
    W.value[i, j] = old + 1e-6
    up = dc.squared_error(dc.standardize(dc.relu(x @ W)), target).item()
    W.value[i, j] = old - 1e-6
    down = dc.squared_error(dc.standardize(dc.relu(x @ W)), target).item()
    W.value[i, j] = old
    num[i, j] = (up - down) / 2e-6
print("finite differences\n", num)

# cosine similarities are what the contrastive loss compares
u = dc.Tensor([[1.0, 0.0], [1.0, 1.0]])
print("cosine\n", dc.cosine_matrix(u, u).value.round(4))

# one Adam step moves each parameter by about lr against its gradient sign
opt = dc.Adam([W], lr=0.1)
before = W.value.copy()
opt.step()
print("Adam step\n", (W.value - before).round(4))
