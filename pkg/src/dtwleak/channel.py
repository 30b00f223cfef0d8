"""Observer models that turn ground-truth decision traces into leaked views.

Three observer kinds of increasing realism:

* ``ORACLE`` sees the full direction sequence (perfect leak).
* ``SINGLE_DIRECTION`` sees, per decision, only whether one chosen direction
  fired — the practical limit when the three selection code paths share
  cache lines and only one can be probed.
* ``NOISY_SINGLE_DIRECTION`` aggregates the single-direction indicator into
  probe windows and corrupts it: each true event is independently dropped
  with ``miss_rate`` and each window gains one spurious hit with
  ``spurious_rate``, capped at the window's probe budget.

All randomness derives from (seed, pair_id), so observations are identical
regardless of execution order or parallel schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from .dataset import PairClass, pair_class_name, pair_class_from_name
from .dtw import DecisionTrace, Direction
from .errors import ConfigError, ParseError

_MASK64 = (1 << 64) - 1


class ObserverKind(Enum):
    ORACLE = "oracle"
    SINGLE_DIRECTION = "single"
    NOISY_SINGLE_DIRECTION = "noisy"


@dataclass(frozen=True)
class ObserverConfig:
    kind: ObserverKind = ObserverKind.NOISY_SINGLE_DIRECTION
    monitored: Direction = Direction.DIAGONAL
    probe_period: int = 98
    miss_rate: float = 0.05
    spurious_rate: float = 0.01
    seed: int = 42

    def validate(self) -> None:
        if self.probe_period < 1:
            raise ConfigError(f"probe_period must be >= 1, got {self.probe_period}")
        for name in ("miss_rate", "spurious_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {rate}")


@dataclass(frozen=True)
class ObservedTrace:
    """What the observer recovered from one decision trace.

    Payload by kind: direction bytes (oracle), 0/1 indicator (single
    direction), or per-window hit counts (noisy).
    """

    kind: ObserverKind
    payload: np.ndarray
    pair_class: PairClass | None = None
    pair_id: int | None = None

    def __len__(self) -> int:
        return int(self.payload.size)


def _pair_rng(cfg: ObserverConfig, pair_id: int) -> np.random.Generator:
    seq = np.random.SeedSequence((cfg.seed & _MASK64, pair_id))
    return np.random.Generator(np.random.PCG64(seq))


def window_count(n_decisions: int, probe_period: int) -> int:
    return math.ceil(n_decisions / probe_period)


def observe(trace: DecisionTrace, cfg: ObserverConfig) -> ObservedTrace:
    """Apply an observer model to one decision trace."""
    cfg.validate()
    if len(trace) == 0:
        raise ConfigError("cannot observe an empty trace")
    pair_id = trace.pair_id if trace.pair_id is not None else 0

    if cfg.kind is ObserverKind.ORACLE:
        payload = trace.decisions.copy()
    elif cfg.kind is ObserverKind.SINGLE_DIRECTION:
        payload = trace.decisions == np.uint8(cfg.monitored)
    else:
        indicator = trace.decisions == np.uint8(cfg.monitored)
        n = indicator.size
        n_windows = window_count(n, cfg.probe_period)
        rng = _pair_rng(cfg, pair_id)
        kept = indicator & (rng.random(n) >= cfg.miss_rate)
        spurious = rng.random(n_windows) < cfg.spurious_rate
        offsets = np.arange(0, n, cfg.probe_period)
        hits = np.add.reduceat(kept.astype(np.int64), offsets)
        payload = np.minimum(hits + spurious, cfg.probe_period)
    return ObservedTrace(kind=cfg.kind, payload=payload,
                         pair_class=trace.pair_class, pair_id=pair_id)


# ---------------------------------------------------------------------------
# Serialization: pair_id,pair_class,kind,payload
# ---------------------------------------------------------------------------

OBSERVED_CSV_HEADER = "pair_id,pair_class,kind,payload"


def _payload_str(obs: ObservedTrace) -> str:
    if obs.kind is ObserverKind.ORACLE:
        return obs.payload.tobytes().decode("ascii")
    if obs.kind is ObserverKind.SINGLE_DIRECTION:
        return obs.payload.astype(np.uint8).tobytes().translate(
            bytes.maketrans(b"\x00\x01", b"01")).decode("ascii")
    return ";".join(str(int(v)) for v in obs.payload)


def write_observed_csv(path: str | Path, observations: Iterable[ObservedTrace]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(OBSERVED_CSV_HEADER + "\n")
        for obs in observations:
            fh.write(f"{obs.pair_id},{pair_class_name(obs.pair_class)},"
                     f"{obs.kind.value},{_payload_str(obs)}\n")


def read_observed_csv(path: str | Path) -> list[ObservedTrace]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != OBSERVED_CSV_HEADER:
            raise ParseError(f"{path}: unexpected observed-trace header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                pid, pc, kind_s, payload_s = line.split(",")
                kind = ObserverKind(kind_s)
                if kind is ObserverKind.ORACLE:
                    payload = np.frombuffer(payload_s.encode("ascii"), dtype=np.uint8)
                elif kind is ObserverKind.SINGLE_DIRECTION:
                    payload = np.frombuffer(payload_s.encode("ascii"), dtype=np.uint8) == ord("1")
                else:
                    payload = np.array([int(v) for v in payload_s.split(";")], dtype=np.int64)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad observed row ({exc})") from None
            out.append(ObservedTrace(kind=kind, payload=payload,
                                     pair_class=pair_class_from_name(pc), pair_id=int(pid)))
    return out
