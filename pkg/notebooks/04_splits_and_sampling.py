# %% [markdown]
# # Splits by parcel and pixel-set sampling
#
# Images of the same parcel are strongly correlated, so every split is made
# over parcels. A spatially stratified holdout forms the test set and the
# rest is dealt into k folds. For the time-series model each parcel-season
# becomes one sequence of pixel sets.

# %%
import numpy as np

from deltacrop import sampler as sm
from deltacrop.datastore import BandStack

# %%
rng = np.random.default_rng(0)
crops = ["paddy"] * 75 + ["sugarcane"] * 38 + ["banana"] * 25 + ["pulses"] * 19 + ["other"] * 15
parcels = [sm.Parcel(f"P{i:04d}", c, tuple(rng.uniform(0, 10, 2))) for i, c in enumerate(crops)]
plan = sm.make_split_plan(parcels, test_count=35, k=5, seed=7)
print("test parcels:", len(plan.test_parcels), "fold sizes:", [len(f) for f in plan.folds])
train, val = plan.fold_split(0)
print("fold 0 disjoint from its training parcels:", not set(train) & set(val))

# %% [markdown]
# ## Pixel sets
#
# A pixel set is an unordered random sample of a parcel's pixels. When the
# parcel has fewer pixels than requested, every pixel is taken once and the
# rest is drawn with replacement.

# %%
stack = BandStack("P0001", "L8", "2019-07-01", "s1", ["B", "G", "R"],
                  rng.uniform(size=(3, 2, 2)).astype(np.float32), "paddy")
ps = sm.sample_pixel_set(stack, 9, seed=1)
print("pixel set shape:", ps.values.shape)

# %% [markdown]
# ## Sequences
#
# A parcel's images are ordered by date, subsampled or padded to a fixed
# length, and given a validity mask.

# %%
series = [BandStack("P0001", "L8", f"2019-{m:02d}-01", "s1", ["B", "G", "R"],
                    rng.uniform(size=(3, 3, 3)).astype(np.float32), "paddy") for m in range(1, 6)]
seq = sm.assemble_sequence(series, t_max=8, n=9, seed=3, label=0, epoch=1)
print("values", seq.values.shape, "mask", seq.mask.astype(int), "positions", seq.positions)
