"""Corpus ingestion, vocabularies, and contiguous segment batching.

Batching folds the token stream into ``batch_size`` parallel lanes and
walks all lanes forward in lockstep, so that lane b of step k continues
exactly where lane b of step k-1 ended. That contiguity is what makes
carrying per-layer memory across segments valid.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


class Vocab:
    """Bijective token <-> id mapping, char- or word-level."""

    def __init__(self, mode: str, tokens: list[str]):
        if mode not in ("char", "word"):
            raise ConfigError(f"vocab mode must be 'char' or 'word', got {mode!r}")
        self.mode = mode
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ConfigError("duplicate tokens in vocabulary")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, text: str) -> np.ndarray:
        if self.mode == "char":
            try:
                ids = [self.token_to_id[c] for c in text]
            except KeyError as e:
                raise ConfigError(f"character {e.args[0]!r} not in vocabulary") from None
        else:
            unk = self.token_to_id["<unk>"]
            ids = [self.token_to_id.get(w, unk) for w in text.split()]
        return np.asarray(ids, dtype=np.int64)

    def decode(self, ids) -> str:
        toks = [self.id_to_token[int(i)] for i in ids]
        return "".join(toks) if self.mode == "char" else " ".join(toks)


def build_vocab(text: str, mode: str = "char") -> Vocab:
    """Char mode: every distinct character, sorted. Word mode:
    whitespace tokens sorted by descending frequency (ties
    lexicographic), with ``<unk>`` at id 0."""
    if not text:
        raise ConfigError("cannot build a vocabulary from empty input")
    if mode == "char":
        return Vocab("char", sorted(set(text)))
    if mode == "word":
        counts: dict[str, int] = {}
        for w in text.split():
            counts[w] = counts.get(w, 0) + 1
        if not counts:
            raise ConfigError("word-mode input contains no tokens")
        ordered = sorted(counts, key=lambda w: (-counts[w], w))
        return Vocab("word", ["<unk>"] + ordered)
    raise ConfigError(f"vocab mode must be 'char' or 'word', got {mode!r}")


def fold_lanes(ids: np.ndarray, batch_size: int) -> np.ndarray:
    """Reshape a stream into (batch_size, N // batch_size) contiguous lanes."""
    ids = np.asarray(ids, dtype=np.int64)
    lane_len = len(ids) // batch_size
    return ids[: batch_size * lane_len].reshape(batch_size, lane_len)


def batches(ids, batch_size: int, tgt_len: int):
    """Yield (input, target) pairs of shape (batch_size, tgt_len).

    target[b, t] = input[b, t] shifted one token forward within the
    lane. The trailing remainder that cannot fill a step is dropped.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) < batch_size * (tgt_len + 1):
        raise ConfigError(
            f"corpus of {len(ids)} tokens is too small for batch_size="
            f"{batch_size}, tgt_len={tgt_len}"
        )
    lanes = fold_lanes(ids, batch_size)
    n_steps = (lanes.shape[1] - 1) // tgt_len
    for k in range(n_steps):
        lo = k * tgt_len
        yield lanes[:, lo : lo + tgt_len], lanes[:, lo + 1 : lo + tgt_len + 1]


class SegmentBatcher:
    """Cyclic contiguous batcher with a wrap signal.

    ``next_batch`` returns (input, target, wrapped); ``wrapped`` is
    True when this batch restarted from the top of the lanes, i.e. any
    carried memory is stale and must be reset by the caller.
    """

    def __init__(self, ids, batch_size: int, tgt_len: int):
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) < batch_size * (tgt_len + 1):
            raise ConfigError(
                f"corpus of {len(ids)} tokens is too small for batch_size="
                f"{batch_size}, tgt_len={tgt_len}"
            )
        self.lanes = fold_lanes(ids, batch_size)
        self.tgt_len = tgt_len
        self.steps_per_pass = (self.lanes.shape[1] - 1) // tgt_len
        self.cursor = 0

    def next_batch(self):
        wrapped = False
        if self.cursor >= self.steps_per_pass:
            self.cursor = 0
            wrapped = True
        lo = self.cursor * self.tgt_len
        inp = self.lanes[:, lo : lo + self.tgt_len]
        tgt = self.lanes[:, lo + 1 : lo + self.tgt_len + 1]
        self.cursor += 1
        return inp, tgt, wrapped


def split_corpus(ids, arch_fraction: float, seed: int = 0):
    """Disjoint contiguous split: the trailing ``arch_fraction`` of the
    stream becomes the architecture shard. Deterministic; ``seed`` is
    accepted for interface stability but the split is positional."""
    ids = np.asarray(ids, dtype=np.int64)
    if not 0.0 < arch_fraction < 1.0:
        raise ConfigError(f"arch_fraction must be in (0, 1), got {arch_fraction}")
    if len(ids) < 2:
        raise ConfigError("corpus too small to split")
    cut = len(ids) - int(round(arch_fraction * len(ids)))
    if cut == 0 or cut == len(ids):
        raise ConfigError("degenerate corpus split; adjust arch_fraction")
    return ids[:cut], ids[cut:]


def synth_induction(length: int, vocab_size: int, pattern_gap: int, seed: int,
                    noise: float = 0.1) -> np.ndarray:
    """Delayed-copy stream: token t repeats token t-gap with probability
    1-noise, otherwise is uniform. Predicting it well requires looking
    exactly ``pattern_gap`` tokens back, which a position-wise stack
    cannot do; consecutive tokens are independent for gap >= 2."""
    if pattern_gap < 2:
        raise ConfigError(f"pattern_gap must be >= 2, got {pattern_gap}")
    rng = np.random.default_rng(seed)
    out = np.empty(length, dtype=np.int64)
    fresh = rng.integers(0, vocab_size, size=length)
    copy = rng.random(length) >= noise
    for t in range(length):
        if t >= pattern_gap and copy[t]:
            out[t] = out[t - pattern_gap]
        else:
            out[t] = fresh[t]
    return out
