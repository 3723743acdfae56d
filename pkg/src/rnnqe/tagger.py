"""Recurrent context-window tagger.

The recurrent cell walks the sentence token by token.  At position ``t`` its
input is the concatenation of the embeddings of the ``window`` tokens
centred on ``t`` (source window first in bilingual mode), padded with
``<pad>`` past either sentence edge.  The output layer maps the topmost
hidden state to a softmax over the model's label set.

Training minimises summed token cross-entropy, one Adadelta update per
sentence, with truncated BPTT of depth ``bptt_depth``.  Recurrent state is
reset at every sentence.
"""

from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import cells
from .corpus import (BAD, OK, OK_B, OK_E, OK_I, PAD, EmbeddingCoverage, TaggedSentence, Vocabulary,
                     apply_sublabels, invert_sublabels, load_embeddings)
from .evaluation import score_words
from .numeric import (AdadeltaState, NumericalError, Rng, adadelta_update, cross_entropy, init_gaussian,
                      softmax)

log = logging.getLogger(__name__)

SHUFFLE_SALT = 0x9E3779B97F4A7C15


class ConfigError(ValueError):
    pass


class TrainingError(NumericalError):
    def __init__(self, epoch: int, sentence: int, detail: str):
        self.epoch, self.sentence = epoch, sentence
        super().__init__(f"epoch {epoch}, sentence {sentence}: {detail}")


@dataclass(frozen=True)
class LabelSet:
    labels: tuple[str, ...]

    def __post_init__(self):
        if BAD not in self.labels:
            raise ValueError("label set must contain BAD")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def to_eval(self, label: str) -> str:
        return BAD if label == BAD else OK

    @property
    def uses_sublabels(self) -> bool:
        return OK not in self.labels


PLAIN_LABELS = LabelSet((OK, BAD))
SUB_LABELS = LabelSet((OK_B, OK_I, OK_E, BAD))


@dataclass
class TaggerConfig:
    window: int = 5
    embed_dim: int = 100
    hidden: int = 100
    hidden2: int | None = None
    cell: str = "lstm"
    bilingual: bool = False
    sublabels: bool = False
    bptt_depth: int = 7
    epochs: int = 50
    seed: int = 0
    rho: float = 0.95
    epsilon: float = 1e-6
    shuffle: bool = True
    min_count: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be odd and >= 1, got {self.window}")
        if self.cell not in cells.CELL_KINDS:
            raise ConfigError(f"cell must be one of {', '.join(cells.CELL_KINDS)}, got {self.cell!r}")
        for name in ("embed_dim", "hidden", "bptt_depth", "min_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.hidden2 is not None and (self.cell != "deep-lstm" or self.hidden2 < 1):
            raise ConfigError("hidden2 is only valid (and must be >= 1) for deep-lstm")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0.0 < self.rho < 1.0 or self.epsilon <= 0.0:
            raise ConfigError("Adadelta needs 0 < rho < 1 and epsilon > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

    @property
    def labels(self) -> LabelSet:
        return SUB_LABELS if self.sublabels else PLAIN_LABELS

    @property
    def input_size(self) -> int:
        return self.window * self.embed_dim * (2 if self.bilingual else 1)

    @property
    def top_hidden(self) -> int:
        if self.cell == "deep-lstm" and self.hidden2 is not None:
            return self.hidden2
        return self.hidden


@dataclass
class TaggerModel:
    config: TaggerConfig
    target_vocab: Vocabulary
    source_vocab: Vocabulary | None
    emb_target: np.ndarray
    emb_source: np.ndarray | None
    cell: cells.CellParams
    W_out: np.ndarray
    b_out: np.ndarray

    @property
    def labels(self) -> LabelSet:
        return self.config.labels

    def parameters(self) -> dict[str, np.ndarray]:
        """Named parameter arrays in serialization order (live references)."""
        out = {"emb.target": self.emb_target}
        if self.emb_source is not None:
            out["emb.source"] = self.emb_source
        out.update(self.cell.named("cell."))
        out["out.W"] = self.W_out
        out["out.b"] = self.b_out
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.parameters().values()])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for arr in self.parameters().values():
            arr[...] = vec[pos:pos + arr.size].reshape(arr.shape)
            pos += arr.size

    def copy(self) -> "TaggerModel":
        return copy.deepcopy(self)


def build_model(
    config: TaggerConfig,
    target_vocab: Vocabulary,
    source_vocab: Vocabulary | None = None,
    target_embeddings: str | Path | None = None,
    source_embeddings: str | Path | None = None,
) -> tuple[TaggerModel, dict[str, EmbeddingCoverage]]:
    """Freshly initialised model, optionally seeded with pretrained embeddings.

    Square weight matrices are random orthogonal, other weights and all
    embeddings N(0, 0.01^2), biases zero.
    """
    if config.bilingual and source_vocab is None:
        raise ConfigError("bilingual model needs a source vocabulary")
    if not config.bilingual and (source_vocab is not None or source_embeddings):
        raise ConfigError("source vocabulary/embeddings given for a monolingual model")
    rng = Rng(config.seed)
    coverage = {}

    def table(vocab, path, side):
        if path:
            emb, cov = load_embeddings(path, vocab, config.embed_dim, rng)
            coverage[side] = cov
            return emb
        return init_gaussian(len(vocab), config.embed_dim, rng)

    emb_target = table(target_vocab, target_embeddings, "target")
    emb_source = table(source_vocab, source_embeddings, "source") if config.bilingual else None
    cell = cells.make_cell(config.cell, config.input_size, config.hidden, rng, config.hidden2)
    n_labels, top = len(config.labels), config.top_hidden
    W_out = cells.init_weight(n_labels, top, rng)
    model = TaggerModel(config, target_vocab, source_vocab, emb_target, emb_source, cell, W_out, np.zeros(n_labels))
    return model, coverage


def zero_model(config: TaggerConfig, target_vocab: Vocabulary, source_vocab: Vocabulary | None = None) -> TaggerModel:
    """All-zero model of the right shapes (deserialization skeleton, tests)."""
    E = config.embed_dim
    return TaggerModel(
        config, target_vocab, source_vocab,
        np.zeros((len(target_vocab), E)),
        np.zeros((len(source_vocab), E)) if config.bilingual else None,
        cells.zero_cell(config.cell, config.input_size, config.hidden, config.hidden2),
        np.zeros((len(config.labels), config.top_hidden)),
        np.zeros(len(config.labels)),
    )


def window_indices(ids: Sequence[int], window: int) -> np.ndarray:
    """``len(ids) x window`` index matrix; positions off the sentence get PAD."""
    n, radius = len(ids), window // 2
    padded = np.full(n + 2 * radius, PAD, dtype=np.int64)
    padded[radius:radius + n] = ids
    return np.lib.stride_tricks.sliding_window_view(padded, window).copy()


def _check_sentence(model: TaggerModel, sentence: TaggedSentence) -> None:
    if len(sentence) == 0:
        raise ValueError("cannot tag an empty sentence")
    if model.config.bilingual and sentence.source_restructured is None:
        raise ConfigError("bilingual model needs restructured source tokens")


def _encode(model: TaggerModel, sentence: TaggedSentence):
    w = model.config.window
    tgt = window_indices(model.target_vocab.encode(sentence.target_tokens), w)
    src = None
    if model.config.bilingual:
        src = window_indices(model.source_vocab.encode(sentence.source_restructured), w)
    return tgt, src


def _inputs(model: TaggerModel, tgt: np.ndarray, src: np.ndarray | None) -> np.ndarray:
    n = tgt.shape[0]
    x = model.emb_target[tgt].reshape(n, -1)
    if src is not None:
        x = np.concatenate([model.emb_source[src].reshape(n, -1), x], axis=1)
    return x


def assemble_input(model: TaggerModel, sentence: TaggedSentence, position: int) -> np.ndarray:
    if not 0 <= position < len(sentence):
        raise IndexError(f"position {position} outside sentence of length {len(sentence)}")
    _check_sentence(model, sentence)
    tgt, src = _encode(model, sentence)
    return _inputs(model, tgt[position:position + 1], None if src is None else src[position:position + 1])[0]


@dataclass
class SentencePass:
    dists: np.ndarray
    caches: list
    hidden: np.ndarray
    tgt_idx: np.ndarray
    src_idx: np.ndarray | None


def _forward(model: TaggerModel, sentence: TaggedSentence) -> SentencePass:
    _check_sentence(model, sentence)
    tgt, src = _encode(model, sentence)
    xs = _inputs(model, tgt, src)
    state = cells.initial_state(model.cell)
    caches, hs = [], []
    for x in xs:
        state, cache = cells.cell_forward(model.cell, state, x)
        caches.append(cache)
        hs.append(cells.cell_output(state))
    hidden = np.array(hs)
    dists = softmax(hidden @ model.W_out.T + model.b_out)
    return SentencePass(dists, caches, hidden, tgt, src)


def forward_sentence(model: TaggerModel, sentence: TaggedSentence) -> tuple[np.ndarray, list]:
    """Per-token label distributions (``n x |labels|``) and step caches."""
    p = _forward(model, sentence)
    return p.dists, p.caches


def training_labels(model: TaggerModel, labels: Sequence[str]) -> list[str]:
    """Gold labels in the model's label set, from plain or sub-labelled input."""
    plain = invert_sublabels(labels)
    return apply_sublabels(plain) if model.config.sublabels else plain


def sentence_loss(model: TaggerModel, sentence: TaggedSentence, gold: Sequence[int] | None = None) -> float:
    if gold is None:
        gold = [model.labels.index(l) for l in training_labels(model, sentence.gold_labels)]
    dists = _forward(model, sentence).dists
    return sum(cross_entropy(d, g) for d, g in zip(dists, gold))


def loss_and_grads(model: TaggerModel, sentence: TaggedSentence,
                   gold: Sequence[int] | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Summed cross-entropy of one sentence and its truncated-BPTT gradient."""
    if gold is None:
        if sentence.gold_labels is None:
            raise ValueError("sentence has no gold labels")
        gold = [model.labels.index(l) for l in training_labels(model, sentence.gold_labels)]
    p = _forward(model, sentence)
    n = len(gold)
    loss = sum(cross_entropy(d, g) for d, g in zip(p.dists, gold))

    d_logits = p.dists.copy()
    d_logits[np.arange(n), gold] -= 1.0
    grads: dict[str, np.ndarray] = {}
    d_h = d_logits @ model.W_out
    cell_grads, d_x = cells.cell_backward(model.cell, p.caches, list(d_h), model.config.bptt_depth)

    w, E = model.config.window, model.config.embed_dim
    g_tgt = np.zeros_like(model.emb_target)
    offset = 0
    if p.src_idx is not None:
        g_src = np.zeros_like(model.emb_source)
        np.add.at(g_src, p.src_idx, d_x[:, :w * E].reshape(n, w, E))
        offset = w * E
    np.add.at(g_tgt, p.tgt_idx, d_x[:, offset:].reshape(n, w, E))
    grads["emb.target"] = g_tgt
    if p.src_idx is not None:
        grads["emb.source"] = g_src
    grads.update(cell_grads.named("cell."))
    grads["out.W"] = d_logits.T @ p.hidden
    grads["out.b"] = d_logits.sum(axis=0)
    return loss, grads


def predict_indices(model: TaggerModel, sentence: TaggedSentence) -> list[int]:
    # np.argmax returns the first maximum: ties go to the earlier label
    return [int(k) for k in np.argmax(_forward(model, sentence).dists, axis=1)]


def predict(model: TaggerModel, sentence: TaggedSentence) -> list[str]:
    labels = model.labels
    return [labels.to_eval(labels.labels[k]) for k in predict_indices(model, sentence)]


def f1_bad(model: TaggerModel, sentences: Sequence[TaggedSentence]) -> float:
    gold = [invert_sublabels(s.gold_labels) for s in sentences]
    pred = [predict(model, s) for s in sentences]
    return score_words(gold, pred).f1_bad


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_f1_bad: float | None
    wall_time: float

    def format(self) -> str:
        dev = "nan" if self.dev_f1_bad is None else f"{self.dev_f1_bad:.6f}"
        return f"epoch={self.epoch}\ttrain_loss={self.train_loss:.6f}\tdev_f1_bad={dev}\twall_time={self.wall_time:.2f}"


@dataclass
class TrainResult:
    final: TaggerModel
    best: TaggerModel | None
    best_epoch: int | None
    log: list[EpochRecord] = field(default_factory=list)


def train(
    model: TaggerModel,
    corpus: Sequence[TaggedSentence],
    dev: Sequence[TaggedSentence] | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Train ``model`` in place for ``config.epochs`` epochs.

    Returns the final-epoch model and, when ``dev`` is given, a copy of the
    model with the highest dev F1-BAD (earliest epoch wins ties).
    """
    cfg = model.config
    if not corpus:
        raise ValueError("training corpus is empty")
    if any(s.gold_labels is None for s in corpus):
        raise ValueError("every training sentence needs gold labels")
    gold = [[model.labels.index(l) for l in training_labels(model, s.gold_labels)] for s in corpus]
    params = model.parameters()
    states = {name: AdadeltaState.for_param(arr, cfg.rho, cfg.epsilon) for name, arr in params.items()}
    order_rng = Rng(cfg.seed ^ SHUFFLE_SALT)
    result = TrainResult(model, None, None)
    best_score = -1.0
    if dev:
        best_score = f1_bad(model, dev)
        result.best, result.best_epoch = model.copy(), 0

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        order = order_rng.permutation(len(corpus)) if cfg.shuffle else range(len(corpus))
        total, tokens = 0.0, 0
        for k in order:
            loss, grads = loss_and_grads(model, corpus[k], gold[k])
            if not np.isfinite(loss):
                raise TrainingError(epoch, k + 1, f"non-finite loss {loss}")
            for name, arr in params.items():
                adadelta_update(arr, grads[name], states[name])
            total += loss
            tokens += len(gold[k])
        if not all(np.all(np.isfinite(a)) for a in params.values()):
            raise TrainingError(epoch, k + 1, "non-finite parameter after update")
        dev_score = f1_bad(model, dev) if dev else None
        record = EpochRecord(epoch, total / tokens, dev_score, time.perf_counter() - started)
        result.log.append(record)
        log.info(record.format())
        if on_epoch is not None:
            on_epoch(record)
        if dev_score is not None and dev_score > best_score:
            best_score = dev_score
            result.best, result.best_epoch = model.copy(), epoch
    return result
