#!/usr/bin/env python3
# Learning curves for three embedding initialisations: random, uninformative "pretrained", and oracle.

# %%
import numpy as np

from dialogact.embeddings import EmbeddingSet
from dialogact.evaluation import learning_curve, oracle_embeddings
from dialogact.neural import TrainConfig
from dialogact.synthetic import synthetic_split, vocabulary_forms

train_set, test_set = synthetic_split(2000, 500, seed=0)
cfg = TrainConfig(epochs=10)

# %% oracle: the embeddings a model learned on the whole training set
oracle = oracle_embeddings(train_set, cfg)

# %% "pretrained" vectors that know nothing about the task
words = sorted(vocabulary_forms())
noise = np.random.default_rng(100).uniform(-0.05, 0.05, (len(words), 300)).astype(np.float32)
irrelevant = EmbeddingSet(words, noise)

# %%
sizes = [50, 100, 200, 500]
rows = learning_curve(train_set, test_set, sizes, ["random", "pretrained", "oracle"], [0], cfg,
                      pretrained=irrelevant, oracle=oracle)
print("size  " + "  ".join(f"{m:>10s}" for m in ("random", "pretrained", "oracle")))
for size in sizes:
    acc = {r["mode"]: r["accuracy"] for r in rows if r["size"] == size}
    print(f"{size:4d}  " + "  ".join(f"{acc[m]:10.3f}" for m in ("random", "pretrained", "oracle")))
