#!/usr/bin/env python3
# Nearest neighbours and pair similarities in trained embeddings, plus a word2vec round trip.

# %%
import tempfile
from pathlib import Path

from dialogact.embeddings import (
    cosine,
    format_neighbor_table,
    format_pair_table,
    load_word2vec_binary,
    save_word2vec_binary,
)
from dialogact.neural import TrainConfig, extract_embeddings, train
from dialogact.synthetic import synthetic_split

train_set, _ = synthetic_split(2000, 0, seed=1)
model, _ = train(train_set, TrainConfig(epochs=10, embedding_dim=50))
emb = extract_embeddings(model.params, model.vocab)

# %% words that play the same role end up close together
print(format_neighbor_table(["yes", "no", "what", "really"], 5, emb))
print()
print(format_pair_table([("yes", "no"), ("yes", "yeah"), ("yes", "what")], emb))

# %% word2vec binary export and re-import is exact
with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "trained.bin"
    save_word2vec_binary(emb, path)
    back = load_word2vec_binary(path)
    print(path.stat().st_size, "bytes;", "identical" if back.vectors.tobytes() == emb.vectors.tobytes() else "DIFFERENT")
    print("cos(yes, no) after reload:", round(cosine(back["yes"], back["no"]), 4))
