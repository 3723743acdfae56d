"""Word- and phrase-level OK/BAD scoring.

Scores are micro-averaged: one confusion matrix pooled over every item of
every sentence.  Undefined precision, recall or F1 (zero denominator) is 0.
Each phrase counts once regardless of its length.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import BAD, OK, validate_segmentation

CLASSES = (OK, BAD)


class ShapeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ClassScores:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class EvalReport:
    level: str
    scores: dict[str, ClassScores]
    total: int

    @property
    def f1_bad(self) -> float:
        return self.scores[BAD].f1

    @property
    def f1_ok(self) -> float:
        return self.scores[OK].f1

    def as_pairs(self) -> list[tuple[str, str]]:
        pairs = [("level", self.level), ("items", str(self.total))]
        for cls in (BAD, OK):
            s = self.scores[cls]
            key = cls.lower()
            pairs += [
                (f"f1_{key}", repr(s.f1)),
                (f"precision_{key}", repr(s.precision)),
                (f"recall_{key}", repr(s.recall)),
                (f"tp_{key}", str(s.tp)),
                (f"fp_{key}", str(s.fp)),
                (f"fn_{key}", str(s.fn)),
            ]
        return pairs

    def to_kv(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.as_pairs())

    def to_table(self) -> str:
        lines = [f"{self.level}-level evaluation ({self.total} items)",
                 f"{'class':<6} {'precision':>10} {'recall':>10} {'f1':>10} {'tp':>7} {'fp':>7} {'fn':>7}"]
        for cls in (BAD, OK):
            s = self.scores[cls]
            lines.append(f"{cls:<6} {s.precision:>10.4f} {s.recall:>10.4f} {s.f1:>10.4f} "
                         f"{s.tp:>7d} {s.fp:>7d} {s.fn:>7d}")
        return "\n".join(lines) + "\n"


def _report(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]], level: str) -> EvalReport:
    if len(gold) != len(pred):
        raise ShapeMismatchError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    confusion = {(g, p): 0 for g in CLASSES for p in CLASSES}
    total = 0
    for k, (g_seq, p_seq) in enumerate(zip(gold, pred), start=1):
        if len(g_seq) != len(p_seq):
            raise ShapeMismatchError(f"line {k}: {len(g_seq)} gold labels but {len(p_seq)} predicted")
        for g, p in zip(g_seq, p_seq):
            if g not in CLASSES or p not in CLASSES:
                raise ValueError(f"line {k}: labels must be OK or BAD, got {g!r}/{p!r}")
            confusion[g, p] += 1
            total += 1
    scores = {}
    for cls in CLASSES:
        tp = confusion[cls, cls]
        fp = sum(confusion[g, cls] for g in CLASSES if g != cls)
        fn = sum(confusion[cls, p] for p in CLASSES if p != cls)
        scores[cls] = ClassScores(tp, fp, fn, total - tp - fp - fn)
    return EvalReport(level, scores, total)


def score_words(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> EvalReport:
    return _report(gold, pred, "word")


def phrase_labels(word_labels: Sequence[str], spans: Sequence[tuple[int, int]]) -> list[str]:
    """A phrase is BAD iff any word inside its span is BAD."""
    try:
        validate_segmentation(spans, len(word_labels))
    except ValueError as exc:
        raise ShapeMismatchError(str(exc)) from None
    return [BAD if BAD in word_labels[a:b] else OK for a, b in spans]


def score_phrases(gold_words: Sequence[Sequence[str]], pred_words: Sequence[Sequence[str]],
                  segmentation: Sequence[Sequence[tuple[int, int]]]) -> EvalReport:
    if not len(gold_words) == len(pred_words) == len(segmentation):
        raise ShapeMismatchError(f"{len(gold_words)} gold, {len(pred_words)} predicted, "
                                 f"{len(segmentation)} segmented sentences")
    gold = [phrase_labels(g, s) for g, s in zip(gold_words, segmentation)]
    pred = [phrase_labels(p, s) for p, s in zip(pred_words, segmentation)]
    return _report(gold, pred, "phrase")


def write_report(report: EvalReport, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    (out_dir / f"{report.level}.kv").write_text(report.to_kv(), encoding="utf-8")
    (out_dir / f"{report.level}.txt").write_text(report.to_table(), encoding="utf-8")
