import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dialogact.corpus import (
    PADDING_INDEX,
    UNK,
    CorpusFormatError,
    LabelSet,
    Utterance,
    Vocabulary,
    bag_of_words,
    build_vocabulary,
    encode_corpus,
    encode_sentence,
    group_dialogues,
    kfold_split,
    prev_bow,
    read_corpus,
    subsample_dialogues,
    tokenize,
    write_corpus,
)


def utt(text, did="d0", label="sd"):
    return Utterance(did, label, tuple(text.split()))


@pytest.mark.parametrize(
    "text, tokens",
    [
        ("can you go?", ["can", "you", "go", "?"]),
        ("", []),
        ("Yes .", ["Yes", "."]),
        ("Yes.", ["Yes", "."]),
        ("well, okay", ["well", ",", "okay"]),
        ("stop!", ["stop", "!"]),
        ("first; second", ["first", ";", "second"]),
        ("?really", ["?", "really"]),
        ("what?!", ["what", "?", "!"]),
        ("uh-huh", ["uh-huh"]),
        ("don't", ["don't"]),
        ("  spaced \t out  ", ["spaced", "out"]),
    ],
)
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


@pytest.mark.parametrize("mark", list(".,!?;"))
def test_tokenize_splits_each_punctuation_mark(mark):
    assert tokenize(f"word{mark}") == ["word", mark]
    assert tokenize(f"{mark}word") == [mark, "word"]


def test_tokenize_preserves_case():
    assert tokenize("Yes yes") == ["Yes", "yes"]


def test_vocabulary_by_frequency():
    corpus = [utt("a a a a a b b b c")]
    v = build_vocabulary(corpus, 3)
    assert set(v.entries) == {"a", "b", UNK}
    assert v.size_v == 3


def test_vocabulary_tie_break_is_lexicographic():
    v = build_vocabulary([utt("b a b a")], 2)
    assert set(v.entries) == {"a", UNK}


def test_vocabulary_default_size():
    words = [f"w{i:04d}" for i in range(1200)]
    v = build_vocabulary([utt(" ".join(words))])
    assert v.size_v == 1000
    assert len(v.index_of) == 1000


def test_vocabulary_shrinks_on_small_corpus():
    v = build_vocabulary([utt("x y")], 1000)
    assert v.size_v == 3


def test_vocabulary_layout():
    v = build_vocabulary([utt("a b")], 10)
    assert v.padding_index == PADDING_INDEX == 0
    assert sorted(v.index_of.values()) == list(range(1, v.size_v + 1))
    assert v.lookup("zzz") == v.unk_index
    assert v.word(0) == "<PADDING>"


def test_vocabulary_rejects_bad_sizes():
    with pytest.raises(ValueError):
        build_vocabulary([utt("a")], 1)
    with pytest.raises(ValueError):
        build_vocabulary([], 10)


def test_vocabulary_determinism():
    corpus = [utt("c b a b c c d e e e e")]
    assert build_vocabulary(corpus, 4).index_of == build_vocabulary(corpus, 4).index_of


def _vocab(words):
    return Vocabulary([UNK] + list(words))


def test_encode_long_sentence_keeps_head_and_tail():
    words = [f"t{i}" for i in range(1, 21)]
    v = _vocab(words)
    ids, mask = encode_sentence(words, v, 15)
    expected = [v.lookup(f"t{i}") for i in list(range(1, 11)) + list(range(16, 21))]
    assert ids.tolist() == expected
    assert mask.all()


def test_encode_short_sentence_duplicates_into_tail():
    v = _vocab("abc")
    ids, mask = encode_sentence(list("abc"), v, 15)
    a, b, c = (v.lookup(x) for x in "abc")
    # hand-computed 1-indexed slots: 1-3 = a,b,c ; 11-13 = a,b,c ; rest PADDING
    expected = [a, b, c, 0, 0, 0, 0, 0, 0, 0, a, b, c, 0, 0]
    assert ids.tolist() == expected
    assert mask.tolist() == [x != 0 for x in expected]


def test_encode_exact_length():
    words = [f"t{i}" for i in range(1, 16)]
    v = _vocab(words)
    ids, mask = encode_sentence(words, v, 15)
    assert ids.tolist() == [v.lookup(w) for w in words]
    assert mask.all()


def test_encode_maps_oov_to_unk():
    v = _vocab("a")
    ids, _ = encode_sentence(["a", "zzz"], v, 15)
    assert ids[1] == v.unk_index


def test_encode_empty_and_bad_length():
    v = _vocab("a")
    ids, mask = encode_sentence([], v, 15)
    assert (ids == 0).all() and not mask.any()
    with pytest.raises(ValueError):
        encode_sentence(["a"], v, 5)


@given(st.lists(st.sampled_from(list("abcdefg") + ["oov"]), max_size=30), st.integers(6, 20))
def test_encode_mask_consistency(tokens, L):
    ids, mask = encode_sentence(tokens, _vocab("abcdefg"), L)
    assert ids.shape == mask.shape == (L,)
    np.testing.assert_array_equal(~mask, ids == PADDING_INDEX)


@given(st.lists(st.sampled_from(list("abcdefg")), min_size=1, max_size=10), st.integers(6, 20))
def test_encode_round_trip_head(tokens, L):
    if len(tokens) > L - 5:
        tokens = tokens[: L - 5]
    v = _vocab("abcdefg")
    ids, mask = encode_sentence(tokens, v, L)
    assert [v.word(i) for i in ids[: len(tokens)]] == tokens
    tail = tokens[-5:]
    assert [v.word(i) for i in ids[L - 5 : L - 5 + len(tail)]] == tail


def test_prev_bow_cases():
    v = _vocab("ab")
    dia = [utt("a"), utt("a a b"), utt("zz yy")]
    assert not prev_bow(dia, 0, v).any()
    bow = prev_bow(dia, 2, v)
    assert bow.tolist() == [0.0, 1.0, 1.0]  # [UNK, a, b]
    only_oov = prev_bow(dia + [utt("a")], 3, v)
    assert only_oov.tolist() == [1.0, 0.0, 0.0]
    with pytest.raises(IndexError):
        prev_bow(dia, 3, v)


def test_encode_corpus_resets_prev_bow_at_dialogue_boundary():
    utts = [utt("a", "d1"), utt("b", "d1"), utt("a", "d2")]
    v = _vocab("ab")
    enc = encode_corpus(utts, v, LabelSet(("sd",)), 6)
    assert not enc.prev_bow[0].any()
    assert enc.prev_bow[1].tolist() == bag_of_words(["a"], v).tolist()
    assert not enc.prev_bow[2].any()
    assert enc.labels.tolist() == [0, 0, 0]


def _dialogues(n, per=3):
    return [Utterance(f"d{d}", "x", (f"w{d}{i}",)) for d in range(n) for i in range(per)]


def test_kfold_one_dialogue_per_fold():
    folds = kfold_split(_dialogues(10), 10, seed=1)
    for train, test in folds:
        assert len({u.dialogue_id for u in test}) == 1
        assert len(train) == 27


def test_kfold_determinism_and_coverage():
    corpus = _dialogues(23, per=2)
    a = kfold_split(corpus, 11, seed=5)
    assert a == kfold_split(corpus, 11, seed=5)
    tested = [u for _, test in a for u in test]
    assert len(a) == 11
    assert sorted(tested, key=lambda u: u.tokens) == sorted(corpus, key=lambda u: u.tokens)
    for train, test in a:
        assert not {u.dialogue_id for u in train} & {u.dialogue_id for u in test}


def test_kfold_errors():
    with pytest.raises(ValueError):
        kfold_split(_dialogues(3), 4)
    with pytest.raises(ValueError):
        kfold_split(_dialogues(3), 1)


def test_subsample_is_nested_and_dialogue_granular():
    corpus = _dialogues(30)
    small = subsample_dialogues(corpus, 10, seed=2)
    large = subsample_dialogues(corpus, 40, seed=2)
    assert len(small) >= 10 and len(large) >= 40
    assert set(small) <= set(large)
    assert len(small) % 3 == 0


def test_group_dialogues_rejects_interleaving():
    with pytest.raises(CorpusFormatError):
        group_dialogues([utt("a", "d1"), utt("b", "d2"), utt("c", "d1")])


def test_corpus_file_round_trip(tmp_path):
    utts = [Utterance("d1", "qy", ("can", "you", "go", "?")), Utterance("d1", "ny", ("yes",))]
    path = tmp_path / "c.tsv"
    write_corpus(utts, path)
    assert read_corpus(path, pretokenized=True) == utts


def test_corpus_file_tokenizes_and_skips_blank_lines(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("d1\tqy\tcan you go?\n\nd1\tny\tYes.\n", encoding="utf-8")
    utts = read_corpus(path)
    assert [u.tokens for u in utts] == [("can", "you", "go", "?"), ("Yes", ".")]


def test_corpus_file_errors_name_the_line(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("d1\tsd\tfine\nd1 sd broken\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError, match=":2:"):
        read_corpus(path)
