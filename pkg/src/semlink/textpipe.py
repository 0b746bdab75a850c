"""Corpus ingestion, vocabulary, BLEU scoring and CRC tagging.

Sentences are plain UTF-8 text, one per line, whitespace-tokenized and
lowercased.  Only sentences of 4..max_len words survive preprocessing; the
rest are filtered with a recorded reason.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ["<pad>", "<unk>", "<bos>", "<eos>"]
MIN_WORDS = 4


class CorpusError(ValueError):
    pass


class Vocabulary:
    """Dense token <-> index mapping with four reserved slots up front."""

    def __init__(self, tokens):
        self.index = {}
        self.tokens = list(RESERVED)
        for tok in RESERVED:
            self.index[tok] = len(self.index)
        for tok in tokens:
            if tok in self.index:
                raise CorpusError(f"duplicate token {tok!r}")
            self.index[tok] = len(self.tokens)
            self.tokens.append(tok)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self.index

    def to_index(self, tok):
        return self.index.get(tok, UNK)

    def to_token(self, idx):
        return self.tokens[idx]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens[len(RESERVED):]:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


def build_vocab(corpus, max_size):
    """Keep the most frequent tokens, ties broken lexicographically."""
    counts = collections.Counter()
    for sentence in corpus:
        counts.update(sentence.lower().split())
    if not counts:
        raise CorpusError("empty corpus: no tokens to build a vocabulary from")
    budget = max_size - len(RESERVED)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([tok for tok, _ in ranked[:budget]])


@dataclass
class TokenSequence:
    """A sentence as padded vocabulary indices."""

    indices: np.ndarray
    true_length: int

    def words(self, vocab):
        return [vocab.to_token(int(i)) for i in self.indices[: self.true_length]]

    def text(self, vocab):
        return " ".join(self.words(vocab))


def encode_sentence(text, vocab, max_len):
    """Tokenize, map OOV words to <unk>, pad to max_len.

    Raises CorpusError (with the filter reason) for sentences outside the
    4..max_len word range, matching corpus preprocessing.
    """
    words = text.lower().split()
    if len(words) < MIN_WORDS:
        raise CorpusError(f"rejected: {len(words)} words < minimum {MIN_WORDS}")
    if len(words) > max_len:
        raise CorpusError(f"rejected: {len(words)} words > maximum {max_len}")
    idx = np.full(max_len, PAD, dtype=np.int64)
    for i, w in enumerate(words):
        idx[i] = vocab.to_index(w)
    return TokenSequence(idx, len(words))


def decode_indices(indices, vocab):
    """Strip padding and map indices back to tokens."""
    out = []
    for i in np.asarray(indices).reshape(-1):
        if i == PAD:
            break
        out.append(vocab.to_token(int(i)))
    return out


def load_corpus(path, max_len):
    """Read one sentence per line; returns (kept sentences, reject counters)."""
    kept = []
    rejects = collections.Counter()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            words = line.lower().split()
            if not words:
                rejects["empty"] += 1
            elif len(words) < MIN_WORDS:
                rejects["too_short"] += 1
            elif len(words) > max_len:
                rejects["too_long"] += 1
            else:
                kept.append(" ".join(words))
    return kept, rejects


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

@dataclass
class BleuReport:
    precisions: tuple
    brevity_penalty: float
    score: float
    weights: tuple


def _ngram_counts(seq, n):
    c = collections.Counter()
    for i in range(len(seq) - n + 1):
        c[tuple(seq[i:i + n])] += 1
    return c


def compute_bleu(candidate, reference, weights=(1.0,)):
    """Single-reference BLEU with clipped modified precision.

    Inputs are index or token sequences (TokenSequence gets pad-stripped).
    A zero precision under a nonzero weight zeroes the composite score.
    """
    cand = _strip(candidate)
    ref = _strip(reference)
    if not cand or not ref:
        raise CorpusError("BLEU needs non-empty sequences after pad stripping")

    precisions = []
    for n in range(1, 5):
        cand_ngrams = _ngram_counts(cand, n)
        total = sum(cand_ngrams.values())
        if total == 0:
            precisions.append(0.0)
            continue
        ref_ngrams = _ngram_counts(ref, n)
        clipped = sum(min(cnt, ref_ngrams[g]) for g, cnt in cand_ngrams.items())
        precisions.append(clipped / total)

    c, r = len(cand), len(ref)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)

    log_sum = 0.0
    zero = False
    for w, p in zip(weights, precisions):
        if w == 0:
            continue
        if p == 0:
            zero = True
            break
        log_sum += w * math.log(p)
    score = 0.0 if zero else bp * math.exp(log_sum)
    return BleuReport(tuple(precisions), bp, score, tuple(weights))


def bleu1(candidate, reference):
    return compute_bleu(candidate, reference, weights=(1.0,)).score


def bleu4(candidate, reference):
    return compute_bleu(candidate, reference, weights=(0.25,) * 4).score


def _strip(seq):
    if isinstance(seq, TokenSequence):
        return [int(i) for i in seq.indices[: seq.true_length]]
    seq = list(seq)
    out = []
    for tok in seq:
        if isinstance(tok, (int, np.integer)) and int(tok) == PAD:
            break
        out.append(int(tok) if isinstance(tok, (int, np.integer)) else tok)
    return out


# ---------------------------------------------------------------------------
# CRC tagging (CRC-16/CCITT over payload bits)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrcTag:
    polynomial: str
    checksum: int


def crc_attach(payload_bits):
    bits = np.asarray(payload_bits, dtype=np.uint8)
    if bits.size == 0:
        raise CorpusError("CRC payload must be non-empty")
    return CrcTag("crc16-ccitt", kernels.crc16_bits(bits))


def crc_check(payload_bits, tag):
    if tag is None:
        return False
    bits = np.asarray(payload_bits, dtype=np.uint8)
    if bits.size == 0:
        return False
    return kernels.crc16_bits(bits) == tag.checksum


def sentence_bits(words):
    """UTF-8 bytes of the joined sentence, as a bit array (MSB first)."""
    raw = " ".join(words).encode("utf-8")
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))


def sentence_tag(words):
    return crc_attach(sentence_bits(words))


def sentence_matches_tag(words, tag):
    if not words:
        return False
    return crc_check(sentence_bits(words), tag)


# ---------------------------------------------------------------------------
# synthetic desk-scale corpus
# ---------------------------------------------------------------------------

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "dr", "gr", "kl", "pl", "st", "tr", "sk"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "n", "r", "s", "t", "l", "m", "nd", "st"]


def _word_bank(rng, count, syllables):
    """Deterministic pseudo-words; distinct within a bank."""
    seen = set()
    words = []
    while len(words) < count:
        w = "".join(
            rng.choice(_ONSETS) + rng.choice(_VOWELS) +
            (rng.choice(_CODAS) if s == syllables - 1 else "")
            for s in range(syllables))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


class _ZipfBank:
    """Word bank with topic slices, sampled Zipf-style within a slice.

    Real text is topically coherent with a frequent head and a long tail;
    drawing a sentence's content words from one topic gives the corpus both
    properties, and gives a contextual decoder something to work with."""

    def __init__(self, rng, count, syllables, n_topics, exponent=1.05):
        self.words = _word_bank(rng, count, syllables)
        self.n_topics = n_topics
        self.slices = []
        per = count // n_topics
        for t in range(n_topics):
            lo = t * per
            hi = count if t == n_topics - 1 else lo + per
            size = hi - lo
            w = 1.0 / np.arange(1, size + 1) ** exponent
            self.slices.append((lo, w / w.sum()))

    def draw(self, rng, topic):
        lo, p = self.slices[topic % self.n_topics]
        return self.words[lo + int(rng.choice(len(p), p=p))]


@dataclass
class SyntheticCorpus:
    sentences: list
    distinct_words: int = field(init=False)

    def __post_init__(self):
        self.distinct_words = len({w for s in self.sentences for w in s.split()})


def synthetic_corpus(n_sentences, max_len=16, seed=7, vocab_words=1000):
    """Templated sentences over a deterministic ~vocab_words-word lexicon.

    Lengths span 4..max_len words so the corpus exercises the whole padded
    range.  Same (n, max_len, seed) -> identical corpus.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    n_topics = 8
    n_nouns = int(vocab_words * 0.40)
    n_verbs = int(vocab_words * 0.25)
    n_adjs = int(vocab_words * 0.20)
    n_advs = vocab_words - n_nouns - n_verbs - n_adjs - 8
    nouns = _ZipfBank(rng, n_nouns, 2, n_topics)
    verbs = _ZipfBank(rng, n_verbs, 2, n_topics)
    adjs = _ZipfBank(rng, n_adjs, 3, n_topics)
    advs = _ZipfBank(rng, n_advs, 3, n_topics)
    dets = ["the", "a", "this", "that", "every", "some", "no", "each"]

    sentences = []
    for _ in range(n_sentences):
        topic = int(rng.integers(n_topics))

        def noun_phrase(n_adj):
            parts = [str(rng.choice(dets))]
            parts.extend(adjs.draw(rng, topic) for _ in range(n_adj))
            parts.append(nouns.draw(rng, topic))
            return parts

        target = int(rng.integers(MIN_WORDS, max_len + 1))
        words = noun_phrase(0)
        words.append(verbs.draw(rng, topic))
        while len(words) + 1 < target:
            roll = rng.integers(0, 3)
            if roll == 0:
                words.append(advs.draw(rng, topic))
            elif roll == 1:
                words.extend(noun_phrase(int(rng.integers(0, 2))))
            else:
                words.extend([verbs.draw(rng, topic),
                              nouns.draw(rng, topic)])
        sentences.append(" ".join(words[:target] if len(words) >= target
                                  else words + [nouns.draw(rng, topic)]))
    return SyntheticCorpus(sentences)
