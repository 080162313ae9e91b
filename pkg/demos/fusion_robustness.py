"""How much does the retrieval scope K matter?

Plain k-nearest-neighbour regression is sensitive to k. The learned scope weights
flatten that dependence, and the path weights lean on the decoder where training
data was plentiful.
"""

# %%
import numpy as np

from ramp import SyntheticConfig, gen_synthetic, split
from ramp import datastore as ds
from ramp.decoder import BinScheme, Stage1Config, bins_of_clamped, train_stage1
from ramp.fusion import Stage2Config, fusion_inputs, predict_batch, train_stage2
from ramp.metrics import mse

data = gen_synthetic(SyntheticConfig(dim=16, n_systems=200, seed=1))
train, dev, test = split(data, (0.7, 0.15, 0.15), seed=0)
fast = dict(learning_rate=1e-3, batch_size=16, accum_steps=1, max_epochs=200, patience=10)
decoder, _ = train_stage1(train, dev, Stage1Config(**fast))
store = ds.build(train)

# %%
print(" K   fixed-k kNN   fused")
fused_by_k = {}
for K in (5, 10, 15, 30, 60):
    nets, _ = train_stage2(train, dev, decoder, store, Stage2Config(K=K, **fast))
    preds = predict_batch(test, decoder, nets, store)
    vanilla = fusion_inputs(test.embeddings, decoder, store, K).S_rk[:, K - 1]
    fused_by_k[K] = preds
    print(f"{K:>2}   {mse(vanilla, test.scores):.4f}        {mse([p.score for p in preds], test.scores):.4f}")

# %% [markdown]
# Scores follow a skewed distribution, so some bins are crowded and others nearly
# empty. Group test items by how many training examples share their bin.

# %%
scheme = BinScheme()
counts = np.bincount(bins_of_clamped(train.scores, scheme), minlength=scheme.n_bins)
test_bins = bins_of_clamped(test.scores, scheme)
w_p = np.array([p.parts.w_p for p in fused_by_k[60]])
print("bin  train count  mean w_p")
for b in range(scheme.n_bins):
    mask = test_bins == b
    if mask.any():
        print(f"{b:>3}  {counts[b]:>11}  {w_p[mask].mean():.3f}")
