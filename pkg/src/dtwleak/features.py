"""Split-count feature vectors from observed traces.

A payload is cut into ``num_splits`` contiguous segments whose sizes differ
by at most one (earlier segments take the remainder).  Per segment the
extractor counts events: all three directions for oracle payloads (blocks
laid out [all A][all B][all D]), fired indicators for single-direction
payloads, and summed window hits for noisy payloads.

Coarser grids should be derived from a finer one via ``coarsen`` so that
segment boundaries align exactly; the refinement identity (summing a fine
vector in groups reproduces the coarse vector) then holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from .dataset import PairClass, pair_class_name, pair_class_from_name
from .channel import ObservedTrace, ObserverKind
from .dtw import Direction
from .errors import ConfigError, ParseError, ShapeError


class FeatureScheme(Enum):
    SINGLE_DIRECTION_COUNTS = "single_direction_counts"
    FULL_PATH_COUNTS = "full_path_counts"


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # int64 counts, length num_splits or 3*num_splits
    pair_class: PairClass
    scheme: FeatureScheme
    num_splits: int
    pair_id: int | None = None

    def __post_init__(self):
        expected = self.num_splits * (3 if self.scheme is FeatureScheme.FULL_PATH_COUNTS else 1)
        if self.values.size != expected:
            raise ShapeError(f"feature length {self.values.size} != expected {expected}")

    @property
    def dim(self) -> int:
        return int(self.values.size)


def segment_offsets(length: int, num_splits: int) -> np.ndarray:
    """Start offsets of the contiguous segments (first ``length % num_splits``
    segments get one extra element)."""
    base, extra = divmod(length, num_splits)
    sizes = np.full(num_splits, base, dtype=np.int64)
    sizes[:extra] += 1
    return np.concatenate(([0], np.cumsum(sizes)[:-1]))


def _check_splits(length: int, num_splits: int) -> None:
    if num_splits <= 0:
        raise ConfigError(f"num_splits must be positive, got {num_splits}")
    if num_splits > length:
        raise ConfigError(f"num_splits {num_splits} exceeds payload length {length}")


def extract(obs: ObservedTrace, num_splits: int) -> FeatureVector:
    """Count events per segment of an observed payload."""
    length = len(obs)
    _check_splits(length, num_splits)
    offsets = segment_offsets(length, num_splits)
    if obs.kind is ObserverKind.ORACLE:
        blocks = [
            np.add.reduceat((obs.payload == np.uint8(d)).astype(np.int64), offsets)
            for d in (Direction.ADVANCE_I, Direction.ADVANCE_J, Direction.DIAGONAL)
        ]
        values = np.concatenate(blocks)
        scheme = FeatureScheme.FULL_PATH_COUNTS
    else:
        values = np.add.reduceat(obs.payload.astype(np.int64), offsets)
        scheme = FeatureScheme.SINGLE_DIRECTION_COUNTS
    return FeatureVector(values=values, pair_class=obs.pair_class, scheme=scheme,
                         num_splits=num_splits, pair_id=obs.pair_id)


def coarsen(vec: FeatureVector, num_splits: int) -> FeatureVector:
    """Aggregate a finer split grid into a coarser one (factors must divide)."""
    if num_splits <= 0:
        raise ConfigError(f"num_splits must be positive, got {num_splits}")
    if vec.num_splits % num_splits != 0:
        raise ConfigError(
            f"cannot coarsen {vec.num_splits} splits into {num_splits}: not a divisor")
    factor = vec.num_splits // num_splits
    if vec.scheme is FeatureScheme.FULL_PATH_COUNTS:
        blocks = vec.values.reshape(3, vec.num_splits)
        values = blocks.reshape(3, num_splits, factor).sum(axis=2).reshape(-1)
    else:
        values = vec.values.reshape(num_splits, factor).sum(axis=1)
    return FeatureVector(values=values, pair_class=vec.pair_class, scheme=vec.scheme,
                         num_splits=num_splits, pair_id=vec.pair_id)


def direction_slice(vec: FeatureVector, direction: Direction) -> FeatureVector:
    """Project a full-path vector onto one direction's count block.

    Equivalent to extracting from a noiseless single-direction observation of
    the same trace at the same grid.
    """
    if vec.scheme is not FeatureScheme.FULL_PATH_COUNTS:
        raise ConfigError("direction_slice requires a full-path vector")
    order = (Direction.ADVANCE_I, Direction.ADVANCE_J, Direction.DIAGONAL)
    block = order.index(direction)
    values = vec.values[block * vec.num_splits:(block + 1) * vec.num_splits].copy()
    return FeatureVector(values=values, pair_class=vec.pair_class,
                         scheme=FeatureScheme.SINGLE_DIRECTION_COUNTS,
                         num_splits=vec.num_splits, pair_id=vec.pair_id)


def stack_features(vectors: list[FeatureVector]):
    """(X, y) matrices for the learners; X float64, y int8 pair-class codes."""
    if not vectors:
        raise ShapeError("empty feature list")
    dims = {v.dim for v in vectors}
    schemes = {v.scheme for v in vectors}
    if len(dims) != 1 or len(schemes) != 1:
        raise ShapeError("mixed feature dimensions or schemes")
    X = np.stack([v.values for v in vectors]).astype(np.float64)
    y = np.array([int(v.pair_class) for v in vectors], dtype=np.int8)
    return X, y


# ---------------------------------------------------------------------------
# Serialization: pair_class,f_0..f_{d-1}
# ---------------------------------------------------------------------------

def export_features(vectors: list[FeatureVector], path: str | Path) -> None:
    """Write feature vectors as CSV, rows ordered by pair_id."""
    dim = None
    rows = sorted(vectors, key=lambda v: (v.pair_id if v.pair_id is not None else 0))
    for v in rows:
        if dim is None:
            dim, scheme, splits = v.dim, v.scheme, v.num_splits
        elif v.dim != dim or v.scheme != scheme or v.num_splits != splits:
            raise ShapeError("mixed schemes or split grids in feature export")
    if dim is None:
        dim = 0
    header = ",".join(["pair_class"] + [f"f_{i}" for i in range(dim)])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for v in rows:
            fh.write(pair_class_name(v.pair_class) + ","
                     + ",".join(str(int(x)) for x in v.values) + "\n")


def read_features(path: str | Path, scheme: FeatureScheme, num_splits: int) -> list[FeatureVector]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("pair_class"):
            raise ParseError(f"{path}: unexpected feature header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                fields = line.split(",")
                values = np.array([int(v) for v in fields[1:]], dtype=np.int64)
                out.append(FeatureVector(values=values,
                                         pair_class=pair_class_from_name(fields[0]),
                                         scheme=scheme, num_splits=num_splits,
                                         pair_id=lineno - 2))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad feature row ({exc})") from None
    return out
