"""Synthetic tagging corpus with a local, learnable BAD rule.

A token is BAD iff it is ``bad1`` or ``bad2`` or it immediately follows
``trg``.  With the default token probabilities about 20% of tokens are BAD.
"""

from __future__ import annotations

import numpy as np

from .corpus import BAD, OK, TaggedSentence
from .numeric import Rng

TRIGGER = "trg"
BAD_WORDS = ("bad1", "bad2")


def vocabulary(size: int = 50) -> list[str]:
    fillers = size - 1 - len(BAD_WORDS)
    return [TRIGGER, *BAD_WORDS] + [f"w{k:02d}" for k in range(fillers)]


def gold_labels(tokens: list[str]) -> list[str]:
    return [BAD if tok in BAD_WORDS or (k > 0 and tokens[k - 1] == TRIGGER) else OK
            for k, tok in enumerate(tokens)]


def generate_corpus(n_sentences: int, seed: int, *, vocab_size: int = 50, min_len: int = 8, max_len: int = 15,
                    p_trigger: float = 0.10, p_bad_word: float = 0.06) -> list[TaggedSentence]:
    words = vocabulary(vocab_size)
    probs = np.full(vocab_size, (1.0 - p_trigger - 2 * p_bad_word) / (vocab_size - 3))
    probs[0], probs[1], probs[2] = p_trigger, p_bad_word, p_bad_word
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    rng = Rng(seed)
    out = []
    for _ in range(n_sentences):
        length = min_len + int(rng.uniform(1)[0] * (max_len - min_len + 1))
        picks = np.searchsorted(cdf, rng.uniform(length), side="right")
        tokens = [words[k] for k in picks]
        out.append(TaggedSentence(tokens, None, gold_labels(tokens)))
    return out
