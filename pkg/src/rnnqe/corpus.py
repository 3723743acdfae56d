"""On-disk formats, vocabularies, source restructuring and sub-labels.

File formats (all UTF-8, one sentence per line, LF line endings):

* tokens / tags: tokens or labels separated by single spaces
* alignment: space-separated ``i-j`` pairs (source index, target index,
  0-based); an empty line means nothing is aligned
* phrases: space-separated ``start:end`` spans with ``end`` exclusive
* embeddings: word2vec text format, header ``count dim`` then
  ``word f1 ... fdim`` per line
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numeric import Rng, init_gaussian

OK, BAD = "OK", "BAD"
OK_B, OK_I, OK_E = "OK_B", "OK_I", "OK_E"
SUBLABELS = (OK_B, OK_I, OK_E)
KNOWN_LABELS = frozenset((OK, BAD) + SUBLABELS)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
NULL_TOKEN = "NULL"
RESERVED = (PAD_TOKEN, UNK_TOKEN, NULL_TOKEN)
PAD, UNK, NULL = 0, 1, 2


class CorpusError(ValueError):
    """Malformed input data; carries the offending file and 1-based line."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if self.path is not None:
            where = f"{self.path}:{line}: " if line is not None else f"{self.path}: "
        super().__init__(where + message)


class LineCountError(CorpusError):
    pass


class ArityError(CorpusError):
    pass


class AlignmentError(CorpusError):
    pass


class LabelError(CorpusError):
    pass


class PhraseError(CorpusError):
    pass


class EmbeddingFormatError(CorpusError):
    pass


@dataclass
class TaggedSentence:
    target_tokens: list[str]
    source_restructured: list[str] | None = None
    gold_labels: list[str] | None = None

    def __post_init__(self):
        n = len(self.target_tokens)
        if self.source_restructured is not None and len(self.source_restructured) != n:
            raise ArityError(f"restructured source has {len(self.source_restructured)} tokens, target has {n}")
        if self.gold_labels is not None and len(self.gold_labels) != n:
            raise ArityError(f"{len(self.gold_labels)} labels for {n} tokens")

    def __len__(self) -> int:
        return len(self.target_tokens)


@dataclass
class Alignment:
    pairs: list[tuple[int, int]] = field(default_factory=list)

    @classmethod
    def parse(cls, line: str) -> "Alignment":
        pairs = []
        for item in line.split():
            src, sep, tgt = item.partition("-")
            if not sep or not src.isdigit() or not tgt.isdigit():
                raise ValueError(f"malformed alignment pair {item!r}")
            pairs.append((int(src), int(tgt)))
        return cls(pairs)

    def validate(self, source_len: int, target_len: int) -> None:
        for s, t in self.pairs:
            if not (0 <= s < source_len and 0 <= t < target_len):
                raise ValueError(f"alignment pair {s}-{t} out of range for source length "
                                 f"{source_len}, target length {target_len}")

    def format(self) -> str:
        return " ".join(f"{s}-{t}" for s, t in self.pairs)


def read_lines(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    if text == "":
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return [ln[:-1] if ln.endswith("\r") else ln for ln in lines]


def write_lines(path: str | Path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ln in lines:
            fh.write(ln + "\n")


def _check_labels(labels: Sequence[str], path=None, line=None) -> None:
    for lab in labels:
        if lab not in KNOWN_LABELS:
            raise LabelError(f"unknown label {lab!r}", path, line)


def restructure_source(source_tokens: Sequence[str], target_len: int, alignment: Alignment) -> list[str]:
    """Reorder source tokens into target order.

    Each target position takes the aligned source token with the smallest
    source index; unaligned positions get ``NULL``.
    """
    alignment.validate(len(source_tokens), target_len)
    best: dict[int, int] = {}
    for s, t in alignment.pairs:
        if t not in best or s < best[t]:
            best[t] = s
    return [source_tokens[best[t]] if t in best else NULL_TOKEN for t in range(target_len)]


def parse_corpus(
    tokens_path: str | Path,
    tags_path: str | Path | None = None,
    source_path: str | Path | None = None,
    align_path: str | Path | None = None,
) -> list[TaggedSentence]:
    """Read a corpus into sentences.

    With both ``source_path`` and ``align_path`` the source is restructured
    into target order.  With ``source_path`` alone the source file is taken
    to be restructured already (as written by ``preprocess``) and must match
    the target token count line by line.
    """
    if align_path and not source_path:
        raise CorpusError("alignment file given without a source file", align_path)
    targets = read_lines(tokens_path)
    files = {"tags": tags_path, "source": source_path, "align": align_path}
    columns: dict[str, list[str]] = {}
    for name, path in files.items():
        if path:
            columns[name] = read_lines(path)
            if len(columns[name]) != len(targets):
                raise LineCountError(f"{len(columns[name])} lines, but {tokens_path} has {len(targets)}", path)

    sentences = []
    for k, line in enumerate(targets):
        lineno = k + 1
        tokens = line.split(" ") if line else []
        if not tokens or any(t == "" for t in tokens):
            raise ArityError("empty sentence or empty token (fields must be separated by single spaces)",
                             tokens_path, lineno)
        labels = None
        if "tags" in columns:
            labels = columns["tags"][k].split()
            if len(labels) != len(tokens):
                raise ArityError(f"{len(labels)} tags for {len(tokens)} tokens", tags_path, lineno)
            _check_labels(labels, tags_path, lineno)
        source = None
        if "source" in columns:
            src_tokens = columns["source"][k].split()
            if "align" in columns:
                try:
                    alignment = Alignment.parse(columns["align"][k])
                    source = restructure_source(src_tokens, len(tokens), alignment)
                except ValueError as exc:
                    raise AlignmentError(str(exc), align_path, lineno) from None
            else:
                if len(src_tokens) != len(tokens):
                    raise ArityError(f"restructured source has {len(src_tokens)} tokens for "
                                     f"{len(tokens)} target tokens", source_path, lineno)
                source = src_tokens
        sentences.append(TaggedSentence(tokens, source, labels))
    return sentences


def write_corpus(
    sentences: Sequence[TaggedSentence],
    tokens_path: str | Path,
    tags_path: str | Path | None = None,
    source_path: str | Path | None = None,
) -> None:
    write_lines(tokens_path, (" ".join(s.target_tokens) for s in sentences))
    if tags_path:
        write_lines(tags_path, (" ".join(s.gold_labels or []) for s in sentences))
    if source_path:
        write_lines(source_path, (" ".join(s.source_restructured or []) for s in sentences))


def apply_sublabels(labels: Sequence[str]) -> list[str]:
    """Replace OK by its position class: first token OK_B, last OK_E, else OK_I.

    A one-token OK sentence becomes OK_B.
    """
    out = []
    n = len(labels)
    for k, lab in enumerate(labels):
        if lab == BAD:
            out.append(BAD)
        elif lab == OK:
            out.append(OK_B if k == 0 else OK_E if k == n - 1 else OK_I)
        else:
            raise LabelError(f"unknown label {lab!r} (expected OK or BAD)")
    return out


def invert_sublabels(labels: Sequence[str]) -> list[str]:
    out = []
    for lab in labels:
        if lab in SUBLABELS or lab == OK:
            out.append(OK)
        elif lab == BAD:
            out.append(BAD)
        else:
            raise LabelError(f"unknown label {lab!r}")
    return out


class Vocabulary:
    """Token list with ``<pad>``=0, ``<unk>``=1, ``NULL``=2 reserved."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:3]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.tokens = tokens
        self.index = {tok: k for k, tok in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.index.get(t, UNK) for t in tokens]

    def save(self, path: str | Path) -> None:
        write_lines(path, self.tokens)

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(read_lines(path))


def build_vocab(token_lists: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Reserved tokens, then tokens seen ``min_count`` times or more.

    Ordered by descending frequency, ties broken lexicographically.
    """
    counts = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    for tok in RESERVED:
        counts.pop(tok, None)
    kept = sorted((tok for tok, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(list(RESERVED) + kept)


@dataclass
class EmbeddingCoverage:
    words: int
    found: int
    missing: list[str]

    @property
    def coverage(self) -> float:
        return self.found / self.words if self.words else 1.0


def load_embeddings(path: str | Path, vocab: Vocabulary, embed_dim: int, rng: Rng) -> tuple[np.ndarray, EmbeddingCoverage]:
    """Embedding table for ``vocab`` seeded from a word2vec text file.

    The whole table is drawn from N(0, 0.01^2) first, then rows for words in
    the file are overwritten, so the random stream does not depend on
    coverage.  Coverage counts non-reserved vocabulary entries.
    """
    lines = read_lines(path)
    if not lines:
        raise EmbeddingFormatError("empty embedding file", path)
    header = lines[0].split()
    if len(header) != 2 or not all(h.isdigit() for h in header):
        raise EmbeddingFormatError("header must be 'count dim'", path, 1)
    count, dim = int(header[0]), int(header[1])
    if dim != embed_dim:
        raise EmbeddingFormatError(f"file dimension {dim} differs from embed_dim {embed_dim}", path, 1)
    if len(lines) - 1 != count:
        raise EmbeddingFormatError(f"header announces {count} rows, file has {len(lines) - 1}", path, 1)

    table = init_gaussian(len(vocab), embed_dim, rng)
    seen = set()
    for k, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != dim + 1:
            raise EmbeddingFormatError(f"expected word plus {dim} values, got {len(parts)} fields", path, k)
        try:
            values = np.array([float(v) for v in parts[1:]], dtype=np.float64)
        except ValueError:
            raise EmbeddingFormatError("non-numeric embedding value", path, k) from None
        if not np.all(np.isfinite(values)):
            raise EmbeddingFormatError("non-finite embedding value", path, k)
        word = parts[0]
        idx = vocab.index.get(word)
        if idx is not None and idx >= len(RESERVED) and word not in seen:
            table[idx] = values
            seen.add(word)
    words = vocab.tokens[len(RESERVED):]
    missing = [w for w in words if w not in seen]
    return table, EmbeddingCoverage(len(words), len(words) - len(missing), missing)


def validate_segmentation(spans: Sequence[tuple[int, int]], length: int | None = None,
                          path=None, line=None) -> None:
    pos = 0
    for start, end in spans:
        if end <= start:
            raise PhraseError(f"empty or reversed span {start}:{end}", path, line)
        if start > pos:
            raise PhraseError(f"gap at index {pos}", path, line)
        if start < pos:
            raise PhraseError(f"overlap at index {start}", path, line)
        pos = end
    if length is not None and pos != length:
        if pos < length:
            raise PhraseError(f"spans cover {pos} of {length} tokens (gap at index {pos})", path, line)
        raise PhraseError(f"spans extend to {pos}, sentence has {length} tokens", path, line)


def parse_phrase_line(line: str) -> list[tuple[int, int]]:
    spans = []
    for item in line.split():
        start, sep, end = item.partition(":")
        if not sep or not start.isdigit() or not end.isdigit():
            raise ValueError(f"malformed span {item!r}")
        spans.append((int(start), int(end)))
    return spans


def parse_phrases(path: str | Path, lengths: Sequence[int] | None = None) -> list[list[tuple[int, int]]]:
    """Read a phrase segmentation file; ``lengths`` enables the coverage check."""
    lines = read_lines(path)
    if lengths is not None and len(lengths) != len(lines):
        raise LineCountError(f"{len(lines)} segmentation lines for {len(lengths)} sentences", path)
    out = []
    for k, line in enumerate(lines):
        try:
            spans = parse_phrase_line(line)
        except ValueError as exc:
            raise PhraseError(str(exc), path, k + 1) from None
        validate_segmentation(spans, None if lengths is None else lengths[k], path, k + 1)
        out.append(spans)
    return out


def format_phrase_line(spans: Sequence[tuple[int, int]]) -> str:
    return " ".join(f"{a}:{b}" for a, b in spans)
