"""Quickstart: train the two-stage scorer on synthetic data and score a held-out split.

Run with ``python demos/quickstart.py``. Takes well under a minute.
"""

# %% [markdown]
# The inputs are fixed-size embeddings with a 1-5 quality score. We don't have real
# speech features here, so the synthetic generator stands in for them: every system
# gets a latent quality and a direction in embedding space, and its utterances
# scatter around that point.

# %%
import numpy as np

from ramp import SyntheticConfig, gen_synthetic, split
from ramp import datastore as ds
from ramp.decoder import Stage1Config, train_stage1
from ramp.fusion import Stage2Config, predict_batch, train_stage2
from ramp.metrics import evaluate

data = gen_synthetic(SyntheticConfig(dim=16, n_systems=120, utterances_per_system=10, seed=0))
train, dev, test = split(data, (0.7, 0.15, 0.15), seed=0)
print(f"{len(train)} train / {len(dev)} dev / {len(test)} test utterances, dim {data.dim}")
print("score histogram (train):", np.histogram(train.scores, bins=8, range=(1, 5))[0])

# %% [markdown]
# Stage 1 fits the parametric decoder: a shared trunk with a regression head and a
# 16-bin classification head. A larger learning rate than the default keeps this demo quick.

# %%
fast = dict(learning_rate=1e-3, batch_size=16, accum_steps=1, max_epochs=200, patience=10)
decoder, info = train_stage1(train, dev, Stage1Config(**fast))
print(f"stage 1 stopped after {info['epochs']} epochs, dev loss {info['best_dev_loss']:.4f}")

# %% [markdown]
# The datastore is just the training embeddings and their scores. Stage 2 freezes the
# decoder and fits the two small fusing networks: one weighs the K retrieval scopes,
# the other decides how much to trust each path.

# %%
store = ds.build(train)
nets, info = train_stage2(train, dev, decoder, store, Stage2Config(K=16, **fast))
print(f"stage 2 stopped after {info['epochs']} epochs, dev MSE {info['best_dev_mse']:.4f}")

# %%
preds = predict_batch(test, decoder, nets, store)
report = evaluate(preds, test)
print(report.table())

# %% [markdown]
# Each prediction keeps its parts, so it's easy to see how the two paths were mixed.

# %%
for p in preds[:5]:
    r = p.to_record()
    print(f"{r['id']:>12}  S_p={r['s_p']:.3f}  S_r={r['s_r']:.3f}  w_p={r['w_p']:.2f}  ->  {r['score']:.3f}")
