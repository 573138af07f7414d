#!/usr/bin/env python3
# A look at the synthetic dialogue corpus used for every desk-scale experiment.

# %%
from collections import Counter

from dialogact.corpus import build_vocabulary, encode_sentence, group_dialogues
from dialogact.synthetic import ORDER_PAIR, SyntheticConfig, generate_synthetic

utts = generate_synthetic(200, seed=0)
dialogues = group_dialogues(utts)
print(len(dialogues), "dialogues,", len(utts), "utterances")

# %% one dialogue, speaker by speaker
for u in dialogues[0]:
    print(f"{u.speaker}  {u.label:3s} {' '.join(u.tokens)}")

# %% label mixture vs what the generator is configured to produce
counts = Counter(u.label for u in utts)
expected = SyntheticConfig().expected_mixture()
for lab in sorted(counts):
    print(f"{lab:3s} {counts[lab] / len(utts):.3f}  (expected {expected[lab]:.3f})")

# %% the statement / yes-no-question twins use the same words in a different order
sd, qy = ORDER_PAIR
for dia in dialogues[:5]:
    a = [u for u in dia if u.label == sd]
    b = [u for u in dia if u.label == qy]
    for x, y in zip(a, b):
        print(f"{sd}: {' '.join(x.tokens):40s} {qy}: {' '.join(y.tokens)}")
        assert sorted(x.tokens) == sorted(y.tokens)

# %% fixed-length encoding: head left-aligned, last 5 tokens in the tail slots
vocab = build_vocabulary(utts, 1000)
ids, mask = encode_sentence(dialogues[0][0].tokens, vocab, 15)
print("ids ", ids)
print("mask", mask.astype(int))
