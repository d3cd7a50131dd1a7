# %% [markdown]
# # Two classifiers
#
# **Single image.** A small residual CNN reads one `B×H×W` chip. Its first
# convolution accepts any number of bands. Two fully connected layers form
# the head.
#
# **Time series.** The pixel-set encoder embeds each date's unordered pixel
# sample with a shared MLP. It pools by mean and standard deviation. The
# temporal attention encoder attends over dates with a learned master query,
# adds sinusoidal positional encodings of each date's order, and ignores
# padded steps.

# %%
import numpy as np

from deltacrop.models import (
    CnnConfig,
    Model,
    PseTaeConfig,
    cnn_forward,
    init_cnn,
    init_psetae,
    positional_encoding,
    pse_forward,
    tae_forward,
)
from deltacrop.numcore import Tensor
from deltacrop.sampler import SampleBatch

rng = np.random.default_rng(0)

# %% [markdown]
# ## Residual CNN on an L8 chip and a PS chip

# %%
print(cnn_forward(rng.normal(size=(4, 3, 3, 3)), init_cnn(CnnConfig(3, 5), 0)).shape)
ps_cfg = CnnConfig(4, 5, 19, 19)
print(cnn_forward(rng.normal(size=(2, 4, 19, 19)), init_cnn(ps_cfg, 0), ps_cfg).shape)

# %% [markdown]
# ## Pixel-set encoder: order of pixels does not matter

# %%
params = init_psetae(PseTaeConfig(in_bands=3, num_classes=5), 0)
x = rng.normal(size=(1, 4, 9, 3)).astype(np.float32)
a = pse_forward(x, params).data
b = pse_forward(x[:, :, rng.permutation(9)], params).data
print("embedding", a.shape, "max change under permutation", np.abs(a - b).max())

# %% [markdown]
# ## Temporal attention: padding does not matter

# %%
print("positional encoding, position 1, width 4:", np.round(positional_encoding(1, 4), 5))
emb = rng.normal(size=(1, 5, 128)).astype(np.float32)
short = tae_forward(Tensor(emb), np.ones((1, 5), bool), np.arange(5)[None], params, 4)
padded_emb = np.concatenate([emb, rng.normal(size=(1, 3, 128)).astype(np.float32)], axis=1)
mask = np.array([[True] * 5 + [False] * 3])
padded = tae_forward(Tensor(padded_emb), mask, np.r_[np.arange(5), 0, 0, 0][None], params, 4)
print("logit change with three padded steps:", np.abs(short.logits.data - padded.logits.data).max())
print("attention of head 0:", np.round(padded.attention[0, 0], 3))

# %% [markdown]
# ## Wrapped as a model
#
# `Model` bundles kind, configuration and parameters. It also takes care of
# the checkpoint format.

# %%
model = Model.build("psetae", PseTaeConfig(in_bands=3, num_classes=5, t_max=41), seed=0)
mask = np.zeros((2, 41), bool)
mask[0, :12] = mask[1, :30] = True
batch = SampleBatch(x=rng.normal(size=(2, 41, 9, 3)).astype(np.float32), labels=np.zeros(2),
                    mask=mask, positions=np.where(mask, np.arange(41), 0))
print("logits", model(batch).shape, "parameters", sum(v.size for v in model.params.arrays().values()))
