"""Dialogue-act classification with an LSTM model and a Maximum Entropy baseline."""

from .corpus import (
    EncodedSentence,
    LabelSet,
    Utterance,
    Vocabulary,
    build_vocabulary,
    encode_sentence,
    kfold_split,
    prev_bow,
    read_corpus,
    tokenize,
)
from .embeddings import (
    EmbeddingSet,
    build_embedding_matrix,
    cosine,
    load_word2vec_binary,
    nearest_neighbors,
    save_word2vec_binary,
)
from .evaluation import cross_validate, learning_curve, viterbi_rescore, wald_ci
from .maxent import MaxEntModel, lbfgs_minimize, train_maxent
from .neural import NeuralModel, TrainConfig, train
from .synthetic import generate_synthetic, synthetic_split

__version__ = "0.1.0"
