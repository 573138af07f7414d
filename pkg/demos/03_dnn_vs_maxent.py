#!/usr/bin/env python3
# Word order matters: the LSTM model separates statement/question twins, a bag-of-words MaxEnt cannot.

# %%
import time

import numpy as np

from dialogact.evaluation import ExperimentReport
from dialogact.maxent import train_maxent
from dialogact.neural import TrainConfig, train
from dialogact.synthetic import ORDER_PAIR, synthetic_split

train_set, test_set = synthetic_split(2000, 500, seed=0)
golds = [u.label for u in test_set]

# %% MaxEnt on binary bag-of-words, L-BFGS
t = time.perf_counter()
me = train_maxent(train_set)
me_pred = me.predict(test_set)
print(f"MaxEnt trained in {time.perf_counter() - t:.1f}s")

# %% LSTM model; fewer epochs than the default to keep the demo short
t = time.perf_counter()
dnn, history = train(train_set, TrainConfig(epochs=8), test=test_set)
dnn_pred = dnn.predict(test_set)
print(f"DNN trained in {time.perf_counter() - t:.1f}s")
for row in history:
    print(row)


# %%
def report(pred):
    return ExperimentReport.from_counts(sum(p == g for p, g in zip(pred, golds)), len(golds)).summary()


def pair_accuracy(pred):
    hits = [p == g for p, g in zip(pred, golds) if g in ORDER_PAIR]
    return np.mean(hits)


print("DNN    ", report(dnn_pred), f" {'/'.join(ORDER_PAIR)} pair: {pair_accuracy(dnn_pred):.3f}")
print("MaxEnt ", report(me_pred), f" {'/'.join(ORDER_PAIR)} pair: {pair_accuracy(me_pred):.3f}")
