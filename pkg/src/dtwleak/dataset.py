"""Labeled time-series ingestion and pair enumeration.

Reads UCR-style text files (one sample per line, integer label first,
TAB- or comma-separated) and enumerates the unordered sample pairs whose
distance computations an observer could watch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, LabelError, ParseError, ShapeError


class Label(IntEnum):
    NORMAL = 0
    ABNORMAL = 1


class PairClass(IntEnum):
    """Class of a sample pair: both normal, both abnormal, or mixed."""

    NORMAL_PAIR = 0
    ABNORMAL_PAIR = 1
    HYBRID_PAIR = 2


PAIR_CLASS_NAMES = ("normal", "abnormal", "hybrid")

# UCR binary label convention: 1 = normal, -1 = abnormal.
_LABEL_MAP = {1: Label.NORMAL, -1: Label.ABNORMAL}


def pair_class_name(pc: PairClass) -> str:
    return PAIR_CLASS_NAMES[int(pc)]


def pair_class_from_name(name: str) -> PairClass:
    try:
        return PairClass(PAIR_CLASS_NAMES.index(name))
    except ValueError:
        raise LabelError(f"unknown pair class name: {name!r}") from None


@dataclass(frozen=True)
class LabeledSeries:
    """One sample: integer id within its source, a binary label, and values."""

    id: int
    label: Label
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ShapeError(f"series {self.id}: values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            raise ParseError(f"series {self.id}: non-finite value")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class PairSet:
    """All unordered distinct sample pairs with their pair class.

    Pairs are stored as (index_a, index_b, PairClass) with index_a < index_b,
    in lexicographic order.
    """

    pairs: list[tuple[int, int, PairClass]]
    source: str = ""

    def __len__(self) -> int:
        return len(self.pairs)

    def class_counts(self) -> dict[PairClass, int]:
        counts = {pc: 0 for pc in PairClass}
        for _, _, pc in self.pairs:
            counts[pc] += 1
        return counts


def classify_pair(label_a: Label, label_b: Label) -> PairClass:
    if label_a == Label.NORMAL and label_b == Label.NORMAL:
        return PairClass.NORMAL_PAIR
    if label_a == Label.ABNORMAL and label_b == Label.ABNORMAL:
        return PairClass.ABNORMAL_PAIR
    return PairClass.HYBRID_PAIR


def _detect_separator(first_line: str) -> str:
    # UCR ships both TAB- and comma-separated variants; sniff the first line.
    return "\t" if "\t" in first_line else ","


def load_ucr(path: str | Path) -> list[LabeledSeries]:
    """Load a UCR-format text file into a list of LabeledSeries.

    Each line is ``<label><sep><v_1><sep>...<sep><v_n>`` where the label is an
    integer token (1 = normal, -1 = abnormal) and the separator is TAB or
    comma (detected from the first line).  Ids are 0-based line numbers; file
    order is preserved; all rows must have the same length.

    Raises ParseError / ShapeError / LabelError with the offending 1-based
    line number in the message.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    samples: list[LabeledSeries] = []
    sep: str | None = None
    width: int | None = None
    row_idx = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if sep is None:
            sep = _detect_separator(line)
        fields = [f for f in line.split(sep) if f != ""]
        try:
            label_token = int(float(fields[0]))
        except ValueError:
            raise ParseError(f"{path.name}:{lineno}: non-numeric label token {fields[0]!r}") from None
        if label_token not in _LABEL_MAP:
            raise LabelError(f"{path.name}:{lineno}: unknown label value {label_token}")
        try:
            values = np.array([float(f) for f in fields[1:]], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"{path.name}:{lineno}: non-numeric token ({exc})") from None
        if values.size == 0:
            raise ShapeError(f"{path.name}:{lineno}: row has no values")
        if not np.all(np.isfinite(values)):
            raise ParseError(f"{path.name}:{lineno}: non-finite value")
        if width is None:
            width = values.size
        elif values.size != width:
            raise ShapeError(
                f"{path.name}:{lineno}: row length {values.size} != {width} of earlier rows"
            )
        samples.append(LabeledSeries(id=row_idx, label=_LABEL_MAP[label_token], values=values))
        row_idx += 1
    return samples


def merge_series(*groups: list[LabeledSeries]) -> list[LabeledSeries]:
    """Concatenate sample lists, renumbering ids and checking equal lengths."""
    merged: list[LabeledSeries] = []
    width: int | None = None
    for group in groups:
        for s in group:
            if width is None:
                width = len(s)
            elif len(s) != width:
                raise ShapeError(f"sample length {len(s)} != {width} across merged inputs")
            merged.append(LabeledSeries(id=len(merged), label=s.label, values=s.values))
    return merged


def enumerate_pairs(samples: list[LabeledSeries], source: str = "") -> PairSet:
    """Enumerate all unordered distinct sample pairs with their pair class.

    Order is lexicographic by (index_a, index_b); no self-pairs.
    """
    if len(samples) < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {len(samples)}")
    pairs = []
    for a in range(len(samples)):
        for b in range(a + 1, len(samples)):
            pairs.append((a, b, classify_pair(samples[a].label, samples[b].label)))
    return PairSet(pairs=pairs, source=source)


def expected_pair_counts(n_normal: int, n_abnormal: int) -> dict[PairClass, int]:
    """Closed-form pair counts for a dataset with the given label totals."""
    return {
        PairClass.NORMAL_PAIR: n_normal * (n_normal - 1) // 2,
        PairClass.ABNORMAL_PAIR: n_abnormal * (n_abnormal - 1) // 2,
        PairClass.HYBRID_PAIR: n_normal * n_abnormal,
    }


def majority_baseline(pairs: PairSet) -> float:
    """Accuracy of always predicting the most frequent pair class."""
    counts = pairs.class_counts()
    return max(counts.values()) / len(pairs)


def values_matrix(samples: list[LabeledSeries]) -> np.ndarray:
    """Stack equal-length samples into an (n_samples, length) float matrix."""
    lengths = {len(s) for s in samples}
    if len(lengths) != 1:
        raise ShapeError(f"samples have mixed lengths: {sorted(lengths)}")
    return np.stack([s.values for s in samples])
