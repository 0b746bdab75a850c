"""Vocabulary, BLEU, CRC and synthetic-corpus tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semlink import textpipe as tp


def test_build_vocab_basic():
    vocab = tp.build_vocab(["a a b c d"], 10)
    assert len(vocab) == 8  # 4 reserved + 4 tokens
    assert vocab.to_index("a") == 4  # most frequent gets first slot
    assert vocab.to_index("zzz") == tp.UNK


def test_build_vocab_tie_break_lexicographic():
    vocab = tp.build_vocab(["y x y x q q q"], 6)  # room for 2 tokens
    assert vocab.to_index("q") == 4
    # x and y tie at 2; "x" wins the smaller index
    assert vocab.to_index("x") == 5
    assert "y" not in vocab


def test_build_vocab_empty_corpus():
    with pytest.raises(tp.CorpusError):
        tp.build_vocab([], 10)


def test_vocab_file_roundtrip(tmp_path):
    vocab = tp.build_vocab(["the cat sat on the mat"], 32)
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    again = tp.Vocabulary.load(path)
    assert again.tokens == vocab.tokens


def test_encode_sentence_padding_and_unk():
    vocab = tp.build_vocab(["a b c d e f"], 32)
    seq = tp.encode_sentence("a b QQQ d", vocab, max_len=30)
    assert seq.true_length == 4
    assert (seq.indices[4:] == tp.PAD).all()
    assert seq.indices[2] == tp.UNK
    full = tp.encode_sentence("a b c d e f", vocab, max_len=6)
    assert full.true_length == 6 and (full.indices != tp.PAD).all()


def test_encode_sentence_rejects_out_of_range():
    vocab = tp.build_vocab(["a b c d"], 32)
    with pytest.raises(tp.CorpusError, match="minimum"):
        tp.encode_sentence("a b c", vocab, 16)
    with pytest.raises(tp.CorpusError, match="maximum"):
        tp.encode_sentence(" ".join("a" * 1 for _ in range(17)), vocab, 16)


def test_roundtrip_in_vocab_sentence():
    vocab = tp.build_vocab(["alpha beta gamma delta"], 32)
    seq = tp.encode_sentence("alpha beta gamma delta", vocab, 8)
    assert tp.decode_indices(seq.indices, vocab) == \
        ["alpha", "beta", "gamma", "delta"]


def test_load_corpus_filters(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("one two three four\nshort one\n\n" +
                    " ".join(["w"] * 40) + "\nfive six seven eight nine\n")
    kept, rejects = tp.load_corpus(path, max_len=16)
    assert len(kept) == 2
    assert rejects["too_short"] == 1
    assert rejects["too_long"] == 1
    assert rejects["empty"] == 1


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def test_bleu_identical_is_one():
    for weights in ((1.0,), (0.25,) * 4):
        rep = tp.compute_bleu(list("abcd"), list("abcd"), weights)
        assert rep.score == pytest.approx(1.0)


def test_bleu_clipped_precision_oracle():
    rep = tp.compute_bleu("the the the the".split(),
                          "the cat is here".split())
    assert abs(rep.precisions[0] - 0.25) < 1e-12
    assert abs(rep.score - 0.25) < 1e-12  # BP = 1 (equal lengths)


def test_bleu_brevity_penalty_oracle():
    # candidate half the reference length -> BP = e^-1
    rep = tp.compute_bleu(["a", "b"], ["a", "b", "c", "d"])
    assert abs(rep.brevity_penalty - math.exp(-1.0)) < 1e-12
    assert abs(rep.score - math.exp(-1.0)) < 1e-12


def test_bleu_zero_precision_convention():
    rep = tp.compute_bleu(list("abcd"), list("wxyz"), weights=(0.25,) * 4)
    assert rep.score == 0.0


def test_bleu_monotone_under_unk_substitution():
    vocab = tp.build_vocab(["q w e r t y u i"], 32)
    ref = tp.encode_sentence("q w e r t y", vocab, 8)
    cand = ref.indices.copy()
    prev = 1.0
    for pos in range(6):
        cand[pos] = tp.UNK
        score = tp.bleu1(list(cand[:6]), ref)
        assert score <= prev + 1e-12
        prev = score
    assert prev == 0.0


# ---------------------------------------------------------------------------
# CRC
# ---------------------------------------------------------------------------

def test_crc_attach_check_roundtrip():
    rng = np.random.default_rng(0)
    payload = rng.integers(0, 2, size=131).astype(np.uint8)
    tag = tp.crc_attach(payload)
    assert tp.crc_check(payload, tag)
    assert not tp.crc_check(payload, None)
    assert not tp.crc_check(payload[:-1], tag)


def test_crc_single_flip_exhaustive_64():
    rng = np.random.default_rng(1)
    payload = rng.integers(0, 2, size=64).astype(np.uint8)
    tag = tp.crc_attach(payload)
    for pos in range(64):
        flipped = payload.copy()
        flipped[pos] ^= 1
        assert not tp.crc_check(flipped, tag)


@given(st.integers(1, 300), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_crc_detects_odd_weight_errors(length, seed):
    rng = np.random.default_rng(seed)
    payload = rng.integers(0, 2, size=length).astype(np.uint8)
    tag = tp.crc_attach(payload)
    weight = min(length, int(rng.integers(0, length // 2 + 1)) * 2 + 1)
    flips = rng.choice(length, size=weight, replace=False)
    corrupted = payload.copy()
    corrupted[flips] ^= 1
    assert not tp.crc_check(corrupted, tag)


def test_sentence_tag_flow():
    words = ["hello", "there", "semantic", "channel"]
    tag = tp.sentence_tag(words)
    assert tp.sentence_matches_tag(words, tag)
    assert not tp.sentence_matches_tag(words[:-1] + ["wrong"], tag)
    assert not tp.sentence_matches_tag([], tag)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

def test_synthetic_corpus_deterministic_and_in_range():
    a = tp.synthetic_corpus(300, max_len=16, seed=5)
    b = tp.synthetic_corpus(300, max_len=16, seed=5)
    assert a.sentences == b.sentences
    lengths = [len(s.split()) for s in a.sentences]
    assert min(lengths) >= 4 and max(lengths) <= 16
    assert tp.synthetic_corpus(300, max_len=16, seed=6).sentences \
        != a.sentences


def test_synthetic_corpus_vocabulary_size():
    corpus = tp.synthetic_corpus(2000, max_len=16, seed=7)
    assert 700 <= corpus.distinct_words <= 1100
