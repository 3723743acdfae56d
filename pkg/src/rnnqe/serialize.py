"""Binary model files (``.qetm``).

All integers and floats are little-endian.  ``str`` is a ``u32`` byte length
followed by UTF-8 bytes.

========== ======= ==========================================================
field      type    notes
========== ======= ==========================================================
magic      4 bytes ``QETM``
version    u16     currently 1
cell       u8      0 lstm, 1 deep-lstm, 2 gru
bilingual  u8      0/1
sublabels  u8      0/1
shuffle    u8      0/1
window     u32
embed_dim  u32
hidden     u32
hidden2    u32     0 when unset
bptt_depth u32
epochs     u32
min_count  u32
seed       u64
rho        f64
epsilon    f64
n_labels   u16     then ``n_labels`` x str, in label-set order
n_target   u32     then ``n_target`` x str (target vocabulary)
n_source   u32     then ``n_source`` x str (0 for monolingual models)
n_params   u32     then per parameter: name str, ndim u8, ndim x u32 dims,
                   prod(dims) x f64 row-major values
========== ======= ==========================================================

Parameters appear in :meth:`TaggerModel.parameters` order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .tagger import TaggerConfig, TaggerModel, zero_model

MAGIC = b"QETM"
VERSION = 1
_CELLS = ("lstm", "deep-lstm", "gru")
_HEADER = struct.Struct("<BBBBIIIIIIIQdd")


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    """Wrong magic bytes or unsupported format version."""


class ModelTruncatedError(ModelFormatError):
    pass


class ModelDimensionError(ModelFormatError):
    pass


def _str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def save_model(model: TaggerModel) -> bytes:
    cfg = model.config
    out = [MAGIC, struct.pack("<H", VERSION)]
    out.append(_HEADER.pack(
        _CELLS.index(cfg.cell), cfg.bilingual, cfg.sublabels, cfg.shuffle,
        cfg.window, cfg.embed_dim, cfg.hidden, cfg.hidden2 or 0, cfg.bptt_depth, cfg.epochs,
        cfg.min_count, cfg.seed, cfg.rho, cfg.epsilon,
    ))
    labels = cfg.labels.labels
    out.append(struct.pack("<H", len(labels)))
    out += [_str(l) for l in labels]
    for vocab in (model.target_vocab, model.source_vocab):
        tokens = vocab.tokens if vocab is not None else []
        out.append(struct.pack("<I", len(tokens)))
        out += [_str(t) for t in tokens]
    params = model.parameters()
    out.append(struct.pack("<I", len(params)))
    for name, arr in params.items():
        out.append(_str(name))
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelTruncatedError(f"model file truncated at byte {len(self.data)} (needed {self.pos + n})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct("<" + fmt)
        return s.unpack(self.take(s.size))

    def string(self) -> str:
        (n,) = self.unpack("I")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"invalid UTF-8 in model file: {exc}") from None


def load_model(data: bytes) -> TaggerModel:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise ModelVersionError("not a model file (bad magic bytes)")
    (version,) = r.unpack("H")
    if version != VERSION:
        raise ModelVersionError(f"unsupported model format version {version} (expected {VERSION})")
    (cell, bilingual, sublabels, shuffle, window, embed_dim, hidden, hidden2, bptt, epochs,
     min_count, seed, rho, epsilon) = r.unpack(_HEADER.format[1:])
    if cell >= len(_CELLS):
        raise ModelFormatError(f"unknown cell code {cell}")
    try:
        cfg = TaggerConfig(window=window, embed_dim=embed_dim, hidden=hidden, hidden2=hidden2 or None,
                           cell=_CELLS[cell], bilingual=bool(bilingual), sublabels=bool(sublabels),
                           bptt_depth=bptt, epochs=epochs, seed=seed, rho=rho, epsilon=epsilon,
                           shuffle=bool(shuffle), min_count=min_count)
    except ValueError as exc:
        raise ModelFormatError(f"invalid configuration block: {exc}") from None
    (n_labels,) = r.unpack("H")
    labels = tuple(r.string() for _ in range(n_labels))
    if labels != cfg.labels.labels:
        raise ModelFormatError(f"label set {labels} inconsistent with configuration")
    vocabs = []
    for _ in range(2):
        (n,) = r.unpack("I")
        tokens = [r.string() for _ in range(n)]
        try:
            vocabs.append(Vocabulary(tokens) if tokens else None)
        except ValueError as exc:
            raise ModelFormatError(f"invalid vocabulary: {exc}") from None
    target_vocab, source_vocab = vocabs
    if target_vocab is None or (source_vocab is None) == cfg.bilingual:
        raise ModelDimensionError("vocabularies inconsistent with bilingual flag")

    model = zero_model(cfg, target_vocab, source_vocab)
    expected = model.parameters()
    (n_params,) = r.unpack("I")
    if n_params != len(expected):
        raise ModelDimensionError(f"file holds {n_params} parameter arrays, configuration implies {len(expected)}")
    for want_name, target in expected.items():
        name = r.string()
        if name != want_name:
            raise ModelDimensionError(f"parameter {name!r} found where {want_name!r} was expected")
        (ndim,) = r.unpack("B")
        shape = r.unpack(f"{ndim}I") if ndim else ()
        if tuple(shape) != target.shape:
            raise ModelDimensionError(f"parameter {name} has shape {tuple(shape)}, expected {target.shape}")
        values = np.frombuffer(r.take(8 * target.size), dtype="<f8")
        target[...] = values.reshape(target.shape)
    if r.pos != len(data):
        raise ModelFormatError(f"{len(data) - r.pos} trailing bytes after parameters")
    return model


def write_model(model: TaggerModel, path: str | Path) -> None:
    Path(path).write_bytes(save_model(model))


def read_model(path: str | Path) -> TaggerModel:
    return load_model(Path(path).read_bytes())
