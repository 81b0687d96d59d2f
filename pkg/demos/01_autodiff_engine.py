"""The numeric core: tensors, a few ops, and gradient verification.

Everything downstream (attention layers, the two-term loss) is built from
these primitives, so this is the layer worth trusting first.
"""

import numpy as np

from pzsl import Tensor, gumbel_softmax_rows, matmul, softmax_rows
from pzsl.gradcheck import gradcheck, make_inputs, suite

# --- forward values ---------------------------------------------------------
x = Tensor([[1.0, 2.0, 3.0]])
print("softmax of [1,2,3]      :", softmax_rows(x).data.round(4))

logits = Tensor(np.array([[2.0, 0.0, 0.0]], dtype=np.float32))
rng = np.random.default_rng(0)
hard = gumbel_softmax_rows(logits, tau=0.5, hard=True, rng=rng)
print("one hard Gumbel draw    :", hard.data)

draws = np.stack([
    gumbel_softmax_rows(logits, tau=0.5, hard=True, rng=rng).data[0]
    for _ in range(2000)
])
print("empirical argmax freqs  :", draws.mean(axis=0).round(3),
      " (theory: softmax(x) =", softmax_rows(logits).data.round(3)[0], ")")

# --- gradients --------------------------------------------------------------
a, b = make_inputs([(3, 4), (4, 2)], seed=1)
print("matmul gradcheck        : %.2e" % gradcheck(matmul, [a, b], seed=1))

print("full suite (soft mode, all params):")
for name, err in suite(seed=1).items():
    print(f"  {name:30s} {err:.2e}")
