"""Deterministic generator for a stand-in two-class ECG beat dataset.

The UCR archive cannot be redistributed with this repository, so the lab
ships a synthetic dataset with the same published composition as its target
(200 beats: 133 normal, 67 abnormal, each 100 samples, z-normalized).

Beats are sums of Gaussian waves (P, QRS, ST, T) whose parameters follow a
per-sample ischemia severity drawn from class-conditional distributions that
overlap: most normals sit near zero severity, abnormals concentrate at high
severity (broad depressed ST segment, inverted T, widened QRS), and the
boundary region is shared.  That overlap is what keeps the classes honestly
confusable, like real recordings.  Noise comes from wave timing/width/
amplitude jitter, baseline wander and band-limited measurement noise.

Severity distributions and noise levels are calibrated so the warping-trace
attack on this dataset lands near the published accuracies the lab
reproduces; regenerating with the default seed reproduces the bundled files
byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import Label, LabeledSeries

DEFAULT_SEED = 20200
LENGTH = 100
N_NORMAL = 133
N_ABNORMAL = 67

# severity ~ clipped normal, per class: (mean, sd, lo, hi)
NORMAL_SEVERITY = (0.05, 0.26, -0.40, 0.58)
ABNORMAL_SEVERITY = (1.00, 0.12, 0.65, 1.45)

# shared variability: (wave time jitter, width jitter, amplitude jitter,
# global shift, wander amplitude, noise sigma, time-warp amplitude)
NORMAL_VAR = (1.8, 0.14, 0.16, 3.5, 0.16, 0.10, 3.5)
ABNORMAL_VAR = (1.3, 0.11, 0.13, 2.8, 0.13, 0.08, 2.2)


def _waves(severity: float):
    """PQRST wave tuple (center, width, amplitude) at a given severity."""
    s = severity
    return (
        (15.0, 3.5, 0.18 * (1.0 - 0.25 * s)),                    # P
        (27.0, 1.4 * (1.0 + 0.30 * s), -0.28 * (1.0 + 0.15 * s)),  # Q
        (30.0 + 0.5 * s, 1.7 * (1.0 + 0.45 * s), 2.05 * (1.0 - 0.22 * s)),  # R
        (33.5 + 1.2 * s, 1.5 * (1.0 + 0.40 * s), -0.45 * (1.0 + 0.35 * s)),  # S
        (43.0 + 2.0 * s, 6.0, -0.22 * s),                        # ST level
        (55.0 + 6.0 * s, 7.0 * (1.0 + 0.15 * s), 0.55 - 0.95 * s),  # T
    )


def _beat(rng: np.random.Generator, severity: float, var) -> np.ndarray:
    t_jit, w_jit, a_jit, g_shift, wander_amp, noise_sd, warp_amp = var
    t = np.arange(LENGTH, dtype=np.float64)
    shift = rng.uniform(-g_shift, g_shift)
    beat = np.zeros(LENGTH)
    for center, width, amp in _waves(severity):
        c = center + shift + rng.normal(0.0, t_jit)
        w = width * (1.0 + rng.normal(0.0, w_jit))
        a = amp * (1.0 + rng.normal(0.0, a_jit))
        beat += a * np.exp(-0.5 * ((t - c) / max(w, 0.3)) ** 2)
    # smooth random time warp: heart-rate variation stretches the beat
    # nonuniformly, which is what scrambles alignment paths between samples
    warp = rng.uniform(0.0, warp_amp) * np.sin(
        2.0 * np.pi * rng.uniform(0.4, 1.2) * t / LENGTH + rng.uniform(0.0, 2.0 * np.pi))
    beat = np.interp(np.clip(t + warp, 0, LENGTH - 1), t, beat)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    cycles = rng.uniform(0.5, 1.5)
    beat += wander_amp * rng.uniform(0.3, 1.0) * np.sin(
        2.0 * np.pi * cycles * t / LENGTH + phase)
    noise = rng.normal(0.0, noise_sd, LENGTH)
    # light smoothing keeps the noise band-limited, as sampled hardware would
    beat += np.convolve(noise, np.array([0.25, 0.5, 0.25]), mode="same")
    beat -= beat.mean()
    beat /= beat.std()
    return beat


def _severity(rng: np.random.Generator, params) -> float:
    mean, sd, lo, hi = params
    return float(np.clip(rng.normal(mean, sd), lo, hi))


def synthesize_dataset(seed: int = DEFAULT_SEED) -> list[LabeledSeries]:
    """200 labeled beats (133 normal, 67 abnormal), deterministic per seed."""
    rng = np.random.default_rng(seed)
    samples: list[LabeledSeries] = []
    labels = [Label.NORMAL] * N_NORMAL + [Label.ABNORMAL] * N_ABNORMAL
    rng.shuffle(labels)
    for i, label in enumerate(labels):
        if label is Label.NORMAL:
            sev, var = _severity(rng, NORMAL_SEVERITY), NORMAL_VAR
        else:
            sev, var = _severity(rng, ABNORMAL_SEVERITY), ABNORMAL_VAR
        samples.append(LabeledSeries(id=i, label=label, values=_beat(rng, sev, var)))
    return samples


def write_ucr(samples: list[LabeledSeries], path: str | Path) -> None:
    """Write samples in UCR text format (label first, TAB-separated)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            label_token = "1" if s.label is Label.NORMAL else "-1"
            fh.write(label_token + "\t" + "\t".join(f"{v:.6f}" for v in s.values) + "\n")


def write_dataset(out_dir: str | Path, seed: int = DEFAULT_SEED,
                  train_size: int = 100) -> tuple[Path, Path]:
    """Generate and write the TRAIN/TEST file pair; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = synthesize_dataset(seed)
    train_path = out_dir / "ecg200_synth_TRAIN.tsv"
    test_path = out_dir / "ecg200_synth_TEST.tsv"
    write_ucr(samples[:train_size], train_path)
    write_ucr(samples[train_size:], test_path)
    return train_path, test_path
