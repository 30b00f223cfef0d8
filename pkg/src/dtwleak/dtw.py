"""Dynamic time warping with decision-trace emission, plus a hardened variant.

The traced variant fills the accumulated-cost grid bottom-up in row-major
order.  At every interior cell it performs the victim's three-way selection
among the up / left / diagonal predecessors and records which one won; the
ordered sequence of those selections is the signal an observer can leak.

Selection semantics mirror the victim code faithfully: the up move wins only
if strictly smaller than both alternatives, then the left move likewise, and
the diagonal wins every remaining case.  Note the corner case this implies:
when the up and left predecessors are exactly equal and both beat the
diagonal, the diagonal is still taken.  The hardened variant reproduces the
same selection arithmetic branch-free, so its distances are bit-identical on
every input, including such ties.

Direction codes are the ASCII bytes 'A' (advance i / up predecessor),
'B' (advance j / left predecessor) and 'D' (diagonal), which makes trace
serialization a straight byte-to-char mapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit, prange

from .dataset import LabeledSeries, Label, PairClass, PairSet, pair_class_name, pair_class_from_name, values_matrix
from .errors import DataError, InvariantError, ParseError


class Direction(IntEnum):
    """One warping choice: advance the first index, the second, or both."""

    ADVANCE_I = ord("A")
    ADVANCE_J = ord("B")
    DIAGONAL = ord("D")

    @property
    def char(self) -> str:
        return chr(self.value)

    @classmethod
    def from_char(cls, c: str) -> "Direction":
        return cls(ord(c))


_A = np.uint8(Direction.ADVANCE_I)
_B = np.uint8(Direction.ADVANCE_J)
_D = np.uint8(Direction.DIAGONAL)


@dataclass(frozen=True)
class DecisionTrace:
    """Row-major sequence of interior-cell warping decisions for one run.

    ``decisions`` holds one byte per interior cell (length (n-1)*(m-1));
    boundary cells have a forced predecessor and emit nothing.  Pair metadata
    is carried along for training and serialization.
    """

    decisions: np.ndarray
    n: int
    m: int
    pair_class: PairClass | None = None
    pair_id: int | None = None
    index_a: int | None = None
    index_b: int | None = None

    def __post_init__(self):
        expected = (self.n - 1) * (self.m - 1)
        if self.decisions.size != expected:
            raise InvariantError(
                f"trace length {self.decisions.size} != (n-1)(m-1) = {expected}"
            )

    def __len__(self) -> int:
        return int(self.decisions.size)

    def to_string(self) -> str:
        return self.decisions.tobytes().decode("ascii")

    @classmethod
    def from_string(cls, s: str, n: int, m: int, **meta) -> "DecisionTrace":
        arr = np.frombuffer(s.encode("ascii"), dtype=np.uint8)
        return cls(decisions=arr, n=n, m=m, **meta)


@dataclass(frozen=True)
class AlignmentPath:
    """Monotone index-pair path from (0,0) to (n-1,m-1)."""

    steps: np.ndarray  # (length, 2) int64

    def __len__(self) -> int:
        return int(self.steps.shape[0])


@dataclass(frozen=True)
class DtwResult:
    distance: float
    trace: DecisionTrace
    path: AlignmentPath


def _series_values(x) -> np.ndarray:
    values = x.values if isinstance(x, LabeledSeries) else np.asarray(x, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise DataError("sequence must be non-empty and 1-D")
    if not np.all(np.isfinite(values)):
        raise DataError("sequence contains a non-finite value")
    return values


@njit(cache=True)
def _fill_traced(a, b, gamma, dec):
    n = a.shape[0]
    m = b.shape[0]
    d0 = a[0] - b[0]
    gamma[0, 0] = d0 * d0
    for j in range(1, m):
        d = a[0] - b[j]
        gamma[0, j] = d * d + gamma[0, j - 1]
    for i in range(1, n):
        d = a[i] - b[0]
        gamma[i, 0] = d * d + gamma[i - 1, 0]
        for j in range(1, m):
            up = gamma[i - 1, j]
            left = gamma[i, j - 1]
            diag = gamma[i - 1, j - 1]
            if up < diag and up < left:
                pred = up
                code = _A
            elif left < up and left < diag:
                pred = left
                code = _B
            else:
                pred = diag
                code = _D
            d = a[i] - b[j]
            gamma[i, j] = d * d + pred
            dec[i, j] = code
    return gamma[n - 1, m - 1]


@njit(cache=True)
def _fill_oblivious(a, b, gamma):
    # Branch-free selection: per interior cell the same comparisons,
    # multiplies and adds execute regardless of values, and the row-major
    # touch pattern depends only on (n, m).
    n = a.shape[0]
    m = b.shape[0]
    d0 = a[0] - b[0]
    gamma[0, 0] = d0 * d0
    for j in range(1, m):
        d = a[0] - b[j]
        gamma[0, j] = d * d + gamma[0, j - 1]
    for i in range(1, n):
        d = a[i] - b[0]
        gamma[i, 0] = d * d + gamma[i - 1, 0]
        for j in range(1, m):
            up = gamma[i - 1, j]
            left = gamma[i, j - 1]
            diag = gamma[i - 1, j - 1]
            fu = np.float64(up < diag) * np.float64(up < left)
            fl = np.float64(left < up) * np.float64(left < diag)
            fd = 1.0 - fu - fl
            pred = up * fu + left * fl + diag * fd
            d = a[i] - b[j]
            gamma[i, j] = d * d + pred
    return gamma[n - 1, m - 1]


@njit(cache=True, parallel=True)
def _batch_traced(values, ia, ib, out_dec, out_dist):
    n_pairs = ia.shape[0]
    length = values.shape[1]
    w = length - 1
    for p in prange(n_pairs):
        a = values[ia[p]]
        b = values[ib[p]]
        gamma = np.empty((length, length))
        d0 = a[0] - b[0]
        gamma[0, 0] = d0 * d0
        for j in range(1, length):
            d = a[0] - b[j]
            gamma[0, j] = d * d + gamma[0, j - 1]
        for i in range(1, length):
            d = a[i] - b[0]
            gamma[i, 0] = d * d + gamma[i - 1, 0]
            row = (i - 1) * w
            for j in range(1, length):
                up = gamma[i - 1, j]
                left = gamma[i, j - 1]
                diag = gamma[i - 1, j - 1]
                if up < diag and up < left:
                    pred = up
                    code = _A
                elif left < up and left < diag:
                    pred = left
                    code = _B
                else:
                    pred = diag
                    code = _D
                d = a[i] - b[j]
                gamma[i, j] = d * d + pred
                out_dec[p, row + (j - 1)] = code
        out_dist[p] = gamma[length - 1, length - 1]


@njit(cache=True, parallel=True)
def _batch_oblivious(values, ia, ib, out_dist):
    n_pairs = ia.shape[0]
    length = values.shape[1]
    for p in prange(n_pairs):
        a = values[ia[p]]
        b = values[ib[p]]
        gamma = np.empty((length, length))
        out_dist[p] = _fill_oblivious(a, b, gamma)


def _backtrack(dec_flat: np.ndarray, n: int, m: int) -> np.ndarray:
    w = m - 1
    i, j = n - 1, m - 1
    rev = [(i, j)]
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            code = dec_flat[(i - 1) * w + (j - 1)]
            if code == _A:
                i -= 1
            elif code == _B:
                j -= 1
            else:
                i -= 1
                j -= 1
        elif i > 0:
            i -= 1
        else:
            j -= 1
        rev.append((i, j))
    return np.array(rev[::-1], dtype=np.int64)


def dtw_traced(a, b, *, pair_class: PairClass | None = None, pair_id: int | None = None,
               index_a: int | None = None, index_b: int | None = None) -> DtwResult:
    """Compute the warping distance of two sequences and leak the decisions.

    Returns the accumulated squared-difference cost of the optimal monotone
    alignment, the per-interior-cell decision trace in row-major order, and
    the alignment path recovered by backtracking the recorded decisions.
    """
    av = _series_values(a)
    bv = _series_values(b)
    n, m = av.size, bv.size
    gamma = np.empty((n, m))
    dec = np.zeros((n, m), dtype=np.uint8)
    distance = float(_fill_traced(av, bv, gamma, dec))
    flat = np.ascontiguousarray(dec[1:, 1:]).reshape(-1)
    trace = DecisionTrace(decisions=flat, n=n, m=m, pair_class=pair_class,
                          pair_id=pair_id, index_a=index_a, index_b=index_b)
    path = AlignmentPath(steps=_backtrack(flat, n, m))
    return DtwResult(distance=distance, trace=trace, path=path)


def dtw_oblivious(a, b) -> float:
    """Warping distance with no decision trace.

    Bit-identical to ``dtw_traced(...).distance`` on every input; the
    selection is computed with arithmetic masks so the executed operation
    sequence and memory-touch pattern depend only on the sequence lengths.
    """
    av = _series_values(a)
    bv = _series_values(b)
    gamma = np.empty((av.size, bv.size))
    return float(_fill_oblivious(av, bv, gamma))


def trace_pairs(samples: list[LabeledSeries], pairs: PairSet):
    """Run traced DTW over every pair; returns (decisions, distances).

    ``decisions`` is a (n_pairs, (L-1)^2) uint8 matrix of direction codes in
    row-major interior order; row p corresponds to pairs.pairs[p].
    """
    values = values_matrix(samples)
    length = values.shape[1]
    if length < 2:
        raise DataError("sequences must have length >= 2 to emit decisions")
    ia = np.array([p[0] for p in pairs.pairs], dtype=np.int64)
    ib = np.array([p[1] for p in pairs.pairs], dtype=np.int64)
    out_dec = np.empty((len(pairs), (length - 1) ** 2), dtype=np.uint8)
    out_dist = np.empty(len(pairs))
    _batch_traced(values, ia, ib, out_dec, out_dist)
    return out_dec, out_dist


def oblivious_distances(samples: list[LabeledSeries], pairs: PairSet) -> np.ndarray:
    """Run the hardened variant over every pair; returns distances only."""
    values = values_matrix(samples)
    ia = np.array([p[0] for p in pairs.pairs], dtype=np.int64)
    ib = np.array([p[1] for p in pairs.pairs], dtype=np.int64)
    out_dist = np.empty(len(pairs))
    _batch_oblivious(values, ia, ib, out_dist)
    return out_dist


def traces_from_batch(pairs: PairSet, decisions: np.ndarray, length: int) -> list[DecisionTrace]:
    """Wrap batch decision rows as DecisionTrace objects (views, no copies)."""
    out = []
    for pid, (a, b, pc) in enumerate(pairs.pairs):
        out.append(DecisionTrace(decisions=decisions[pid], n=length, m=length,
                                 pair_class=pc, pair_id=pid, index_a=a, index_b=b))
    return out


def path_cost(a, b, path: AlignmentPath) -> float:
    """Replay the squared-difference accumulation along an alignment path.

    Uses the same operand order as the grid fill (local cost + accumulator),
    so on the recovered optimal path the result equals the reported distance
    bit-for-bit.
    """
    av = _series_values(a)
    bv = _series_values(b)
    steps = path.steps
    i, j = steps[0]
    d = av[i] - bv[j]
    acc = d * d
    for k in range(1, steps.shape[0]):
        i, j = steps[k]
        d = av[i] - bv[j]
        acc = d * d + acc
    return float(acc)


def is_valid_path(path: AlignmentPath, n: int, m: int) -> bool:
    steps = path.steps
    if tuple(steps[0]) != (0, 0) or tuple(steps[-1]) != (n - 1, m - 1):
        return False
    deltas = np.diff(steps, axis=0)
    ok = ((deltas == 0) | (deltas == 1)).all() and (deltas.sum(axis=1) >= 1).all()
    return bool(ok) and len(path) <= n + m - 1 and len(path) >= max(n, m)


def victim_classify_1nn(query, references: list[LabeledSeries]):
    """1-nearest-neighbour warping-distance classifier, the victim model.

    Returns the predicted label (ties resolved to the lowest reference index)
    together with the decision trace of every distance computation performed,
    in reference order: the attack surface of one classification.
    """
    if not references:
        raise DataError("reference set must be non-empty")
    traces = []
    best = -1
    best_dist = np.inf
    for idx, ref in enumerate(references):
        result = dtw_traced(query, ref, index_b=idx)
        traces.append(result.trace)
        if result.distance < best_dist:
            best_dist = result.distance
            best = idx
    return references[best].label, traces


def victim_1nn_accuracy(train: list[LabeledSeries], test: list[LabeledSeries]) -> float:
    """Fraction of test samples the 1-NN victim labels correctly."""
    values = values_matrix(train + test)
    n_train = len(train)
    ia, ib = [], []
    for q in range(len(test)):
        for r in range(n_train):
            ia.append(n_train + q)
            ib.append(r)
    out = np.empty(len(ia))
    _batch_oblivious(values, np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64), out)
    dists = out.reshape(len(test), n_train)
    preds = dists.argmin(axis=1)
    correct = sum(1 for q, r in enumerate(preds) if train[r].label == test[q].label)
    return correct / len(test)


# ---------------------------------------------------------------------------
# Reference implementations with operation accounting.
#
# These mirror the two fill kernels step for step in pure Python and tally
# every comparison, multiply, add/sub and store they execute.  The traced
# tally varies with the values (short-circuit evaluation takes different
# comparison paths); the hardened tally is a function of the lengths alone.
# ---------------------------------------------------------------------------

def _profile_boundaries(av, bv, gamma, ops):
    n, m = av.size, bv.size
    gamma[0, 0] = (av[0] - bv[0]) ** 2
    ops["sub"] += 1
    ops["mul"] += 1
    ops["store"] += 1
    for j in range(1, m):
        gamma[0, j] = (av[0] - bv[j]) ** 2 + gamma[0, j - 1]
        ops["sub"] += 1
        ops["mul"] += 1
        ops["add"] += 1
        ops["store"] += 1
    for i in range(1, n):
        gamma[i, 0] = (av[i] - bv[0]) ** 2 + gamma[i - 1, 0]
        ops["sub"] += 1
        ops["mul"] += 1
        ops["add"] += 1
        ops["store"] += 1


def traced_op_profile(a, b):
    """(distance, op tally) of the traced fill, counting short-circuit paths."""
    av = _series_values(a)
    bv = _series_values(b)
    n, m = av.size, bv.size
    gamma = np.empty((n, m))
    ops = {"cmp": 0, "sub": 0, "mul": 0, "add": 0, "store": 0}
    _profile_boundaries(av, bv, gamma, ops)
    for i in range(1, n):
        for j in range(1, m):
            up = gamma[i - 1, j]
            left = gamma[i, j - 1]
            diag = gamma[i - 1, j - 1]
            ops["cmp"] += 1
            if up < diag:
                ops["cmp"] += 1
            if up < diag and up < left:
                pred = up
            else:
                ops["cmp"] += 1
                if left < up:
                    ops["cmp"] += 1
                if left < up and left < diag:
                    pred = left
                else:
                    pred = diag
            gamma[i, j] = (av[i] - bv[j]) ** 2 + pred
            ops["sub"] += 1
            ops["mul"] += 1
            ops["add"] += 1
            ops["store"] += 1
    return float(gamma[n - 1, m - 1]), ops


def oblivious_op_profile(a, b):
    """(distance, op tally) of the hardened fill; the tally depends on lengths only."""
    av = _series_values(a)
    bv = _series_values(b)
    n, m = av.size, bv.size
    gamma = np.empty((n, m))
    ops = {"cmp": 0, "sub": 0, "mul": 0, "add": 0, "store": 0}
    _profile_boundaries(av, bv, gamma, ops)
    for i in range(1, n):
        for j in range(1, m):
            up = gamma[i - 1, j]
            left = gamma[i, j - 1]
            diag = gamma[i - 1, j - 1]
            fu = float(up < diag) * float(up < left)
            fl = float(left < up) * float(left < diag)
            ops["cmp"] += 4
            ops["mul"] += 2
            fd = 1.0 - fu - fl
            ops["sub"] += 2
            pred = up * fu + left * fl + diag * fd
            ops["mul"] += 3
            ops["add"] += 2
            gamma[i, j] = (av[i] - bv[j]) ** 2 + pred
            ops["sub"] += 1
            ops["mul"] += 1
            ops["add"] += 1
            ops["store"] += 1
    return float(gamma[n - 1, m - 1]), ops


# ---------------------------------------------------------------------------
# Trace serialization: pair_id,index_a,index_b,pair_class,trace
# ---------------------------------------------------------------------------

TRACE_CSV_HEADER = "pair_id,index_a,index_b,pair_class,trace"


def write_traces_csv(path: str | Path, traces: Iterable[DecisionTrace]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_CSV_HEADER + "\n")
        for t in traces:
            fh.write(f"{t.pair_id},{t.index_a},{t.index_b},"
                     f"{pair_class_name(t.pair_class)},{t.to_string()}\n")


def read_traces_csv(path: str | Path, n: int, m: int) -> list[DecisionTrace]:
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != TRACE_CSV_HEADER:
            raise ParseError(f"{path}: unexpected trace header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                pid, a, b, pc, trace = line.split(",")
                traces.append(DecisionTrace.from_string(
                    trace, n, m, pair_class=pair_class_from_name(pc),
                    pair_id=int(pid), index_a=int(a), index_b=int(b)))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad trace row ({exc})") from None
    return traces
