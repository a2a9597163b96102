"""A tour of the tensor engine underneath both decoders.

Everything in the package trains through this one reverse-mode engine:
float64 numpy arrays, closures recording how each value was made, and a
single topological backward sweep. No framework, no hidden state.
"""

import numpy as np

from ctxnmt import tensor as T
from ctxnmt.tensor import Tensor, no_grad

# A small expression first: y = sum((a @ b + c)^2). Gradients fall out of
# the chain rule; the engine just applies it tape-style.
a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
b = Tensor(np.array([[0.5, -1.0], [2.0, 0.0]]), requires_grad=True)
c = Tensor(np.array([1.0, -1.0]), requires_grad=True)

y = ((a @ b + c) * (a @ b + c)).sum()
y.backward()
print("y =", y.item())
print("dy/da =\n", a.grad)

# Check one entry against central finite differences.
eps = 1e-6
probe = a.data.copy()
probe[0, 1] += eps
hi = float(np.sum((probe @ b.data + c.data) ** 2))
probe[0, 1] -= 2 * eps
lo = float(np.sum((probe @ b.data + c.data) ** 2))
print("finite diff:", (hi - lo) / (2 * eps), " engine:", a.grad[0, 1])

# Softmax and log_softmax are the numerically touchy pieces; a shifted
# input gives identical probabilities (the max-subtraction trick).
logits = Tensor(np.array([[2.0, 4.0, -1.0]]))
shifted = Tensor(logits.data + 1000.0)
print("softmax stable:", np.allclose(T.softmax(logits).data, T.softmax(shifted).data))

# no_grad turns recording off: this is how the frozen first-pass model
# feeds the second pass without joining its graph.
w = Tensor(np.eye(2), requires_grad=True)
with no_grad():
    frozen = w @ w
print("parents recorded under no_grad:", len(frozen._parents))

# The additive attention mask convention: -1e9 on forbidden slots, applied
# before softmax, so padding gets numerically zero weight.
scores = Tensor(np.array([[0.3, 0.1, 0.9]]))
mask = np.array([[0.0, -1e9, 0.0]])
w_attn = T.softmax(scores + Tensor(mask))
print("masked attention row:", np.round(w_attn.data, 4))
