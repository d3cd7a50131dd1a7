# %% [markdown]
# # A small autodiff core
#
# Every model in the package runs on `deltacrop.numcore`: a numpy-backed
# tensor that records the operations applied to it and replays them in
# reverse to produce gradients. This notebook exercises the pieces the
# models rely on and checks them against central differences.

# %%
import numpy as np

from deltacrop.numcore import Tensor, grad_check, ops

# %% [markdown]
# ## Forward and backward
#
# `f(x) = Σ x²` has gradient `2x`. A tensor used twice accumulates both
# contributions.

# %%
x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
(x * x).sum().backward()
print("grad of sum(x^2):", x.grad)

a = Tensor(np.array([1.0, -1.0]), requires_grad=True)
(a * 3.0 + a * a).sum().backward()
print("grad of sum(3a + a^2):", a.grad)

# %% [markdown]
# ## Convolution and softmax
#
# The CNN needs `conv2d`; the temporal attention needs a masked softmax whose
# masked entries are exact zeros.

# %%
img = Tensor(np.ones((1, 1, 3, 3)))
print("all-ones 3x3 image * all-ones kernel:", ops.conv2d(img, Tensor(np.ones((1, 1, 3, 3)))).data.ravel())
print("softmax [0, ln 3]:", ops.softmax(Tensor(np.array([0.0, np.log(3)])), axis=0).data)
print("masked softmax:", ops.masked_softmax(Tensor(np.array([[2.0, 1.0, 5.0]])), np.array([[1, 1, 0]], bool)).data)

# %% [markdown]
# ## Gradient check
#
# `grad_check` compares the recorded gradient with `(f(x+ε) − f(x−ε)) / 2ε`
# element by element, in float64.

# %%
rng = np.random.default_rng(0)
w = Tensor(rng.normal(size=(4, 3)))
report = grad_check(lambda t: ops.log_softmax(t @ w, axis=1).sum(), rng.normal(size=(5, 4)))
print(f"max relative error {report.max_rel_error:.2e}, passed={report.passed}")
