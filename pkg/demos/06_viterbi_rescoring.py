#!/usr/bin/env python3
# Rescoring per-utterance label distributions with a smoothed label bigram.

# %%
import numpy as np

from dialogact.corpus import LabelSet, group_dialogues
from dialogact.evaluation import accuracy, rescore_corpus, train_bigram
from dialogact.maxent import me_predict, train_maxent
from dialogact.synthetic import synthetic_split

train_set, test_set = synthetic_split(2000, 500, seed=2)
labels = LabelSet.from_utterances(train_set)

# %% bigram over the label sequences of the training dialogues
seqs = [[labels.index(u.label) for u in d] for d in group_dialogues(train_set)]
bigram = train_bigram(seqs, len(labels), k=1.0)
np.set_printoptions(precision=2, suppress=True)
print(labels.labels)
print(bigram.transitions)

# %% a weak first-pass model: MaxEnt with a tiny vocabulary
me = train_maxent(train_set, vocab_size=15)
_, probs = me_predict(me.params, me.features(test_set))
golds = [u.label for u in test_set]

for w in (0.0, 0.5, 1.0, 2.0):
    ids = rescore_corpus(probs, test_set, bigram, w)
    print(f"weight {w:3.1f}: accuracy {accuracy([labels.labels[i] for i in ids], golds):.3f}")
