"""Loading, synthesis and preconditioning of multirate wrist recordings.

A recording holds three channels sampled at different rates (PPG 64 Hz,
EDA 4 Hz, 3-axis ACC 32 Hz by default) plus labelled time intervals.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_RATES = {"ppg": 64, "eda": 4, "acc": 32}


class DataValidationError(ValueError):
    """Raised when on-disk or in-memory data violates the recording contract."""


class Label(str, Enum):
    STRESS = "stress"
    NOSTRESS = "nostress"
    IGNORE = "ignore"

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise DataValidationError(f"unknown label {text!r}") from None


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    rate: int

    def __post_init__(self):
        if self.name not in DEFAULT_RATES:
            raise ValueError(f"unknown channel {self.name!r}")
        if int(self.rate) != self.rate or self.rate <= 0:
            raise ValueError(f"channel rate must be a positive integer, got {self.rate}")


@dataclass(frozen=True)
class LabelInterval:
    start_s: int
    end_s: int
    label: Label

    def __post_init__(self):
        if self.start_s < 0 or self.end_s <= self.start_s:
            raise DataValidationError(
                f"invalid interval [{self.start_s}, {self.end_s})"
            )

    def contains(self, start_s: int, end_s: int) -> bool:
        return self.start_s <= start_s and end_s <= self.end_s


def _frozen(a, dtype=np.float64, ndim=1) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    if arr.ndim != ndim:
        raise DataValidationError(f"expected {ndim}-d samples, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Recording:
    """One subject's synchronized channels.

    Arrays are stored read-only so a Recording can be shared freely.
    """

    subject_id: str
    ppg: np.ndarray
    eda: np.ndarray
    acc_xyz: np.ndarray
    labels: tuple[LabelInterval, ...] = ()
    rates: dict = field(default_factory=lambda: dict(DEFAULT_RATES))

    def __post_init__(self):
        object.__setattr__(self, "ppg", _frozen(self.ppg))
        object.__setattr__(self, "eda", _frozen(self.eda))
        acc = _frozen(self.acc_xyz, ndim=2)
        if acc.shape[1] != 3:
            raise DataValidationError(f"acc_xyz must have 3 columns, got {acc.shape[1]}")
        object.__setattr__(self, "acc_xyz", acc)
        object.__setattr__(self, "labels", tuple(sorted(self.labels, key=lambda i: i.start_s)))
        for name in DEFAULT_RATES:
            ChannelSpec(name, self.rates[name])

        duration = len(self.ppg) / self.rates["ppg"]
        if duration != int(duration):
            raise DataValidationError(
                f"{self.subject_id}: PPG length {len(self.ppg)} is not a whole number of seconds"
            )
        duration = int(duration)
        for name, arr in (("eda", self.eda), ("acc", self.acc_xyz)):
            expected = duration * self.rates[name]
            if len(arr) != expected:
                raise DataValidationError(
                    f"{self.subject_id}: {name} has {len(arr)} samples, "
                    f"expected {expected} for a {duration} s recording"
                )
        _check_intervals(self.labels, duration, self.subject_id)

    @property
    def duration_s(self) -> int:
        return len(self.ppg) // self.rates["ppg"]

    @property
    def specs(self) -> dict[str, ChannelSpec]:
        return {name: ChannelSpec(name, rate) for name, rate in self.rates.items()}


def _check_intervals(labels: Sequence[LabelInterval], duration: int, subject: str) -> None:
    prev = None
    for iv in labels:
        if iv.end_s > duration:
            raise DataValidationError(
                f"{subject}: label interval [{iv.start_s}, {iv.end_s}) exceeds duration {duration} s"
            )
        if prev is not None and iv.start_s < prev.end_s:
            raise DataValidationError(
                f"{subject}: overlapping label intervals [{prev.start_s}, {prev.end_s}) "
                f"and [{iv.start_s}, {iv.end_s})"
            )
        prev = iv


# ---------------------------------------------------------------------------
# On-disk format

def _read_rows(path: Path, ncols: int) -> list[list[float]]:
    if not path.is_file():
        raise DataValidationError(f"missing file: {path}")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != ncols:
                raise DataValidationError(
                    f"{path}:{lineno}: expected {ncols} value(s), got {len(row)}"
                )
            try:
                vals = [float(x) for x in row]
            except ValueError:
                raise DataValidationError(f"{path}:{lineno}: malformed number in {row!r}") from None
            rows.append(vals)
    return rows


def _read_labels(path: Path) -> list[LabelInterval]:
    if not path.is_file():
        raise DataValidationError(f"missing file: {path}")
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 3:
                raise DataValidationError(f"{path}:{lineno}: expected start_s,end_s,label")
            try:
                out.append(LabelInterval(int(row[0]), int(row[1]), Label.parse(row[2])))
            except ValueError as exc:
                raise DataValidationError(f"{path}:{lineno}: {exc}") from None
    return out


def load_recording(dir_path: str | os.PathLike) -> Recording:
    """Read a recording directory (subject.json, ppg/eda/acc/labels.csv).

    A trailing partial second is truncated with a warning; any other
    disagreement between channel lengths is an error.
    """
    d = Path(dir_path)
    meta_path = d / "subject.json"
    if not meta_path.is_file():
        raise DataValidationError(f"missing file: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        subject = str(meta["id"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataValidationError(f"{meta_path}: malformed subject metadata ({exc})") from None
    rates = dict(DEFAULT_RATES)
    rates.update({k: int(v) for k, v in meta.get("rates", {}).items()})

    ppg = np.array(_read_rows(d / "ppg.csv", 1)).reshape(-1)
    eda = np.array(_read_rows(d / "eda.csv", 1)).reshape(-1)
    acc = np.array(_read_rows(d / "acc.csv", 3)).reshape(-1, 3)
    labels = _read_labels(d / "labels.csv")

    n_sec = len(ppg) // rates["ppg"]
    if len(ppg) % rates["ppg"]:
        logger.warning(
            "%s: truncating %d trailing PPG samples (partial second)",
            subject, len(ppg) % rates["ppg"],
        )
    # partial trailing seconds are dropped; whole-second counts must agree
    for name, arr in (("eda", eda), ("acc", acc)):
        if len(arr) // rates[name] != n_sec:
            raise DataValidationError(
                f"{d}: length inconsistency: {name} has {len(arr)} samples but PPG "
                f"implies {n_sec} s ({n_sec * rates[name]} samples)"
            )
        if len(arr) % rates[name]:
            logger.warning("%s: truncating trailing partial second of %s", subject, name)
    return Recording(
        subject_id=subject,
        ppg=ppg[: n_sec * rates["ppg"]],
        eda=eda[: n_sec * rates["eda"]],
        acc_xyz=acc[: n_sec * rates["acc"]],
        labels=tuple(labels),
        rates=rates,
    )


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_recording(rec: Recording, dir_path: str | os.PathLike) -> Path:
    """Write ``rec`` in the directory format read by :func:`load_recording`."""
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"id": rec.subject_id, "rates": dict(rec.rates)}
    (d / "subject.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    with open(d / "ppg.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(_fmt(v) + "\n" for v in rec.ppg)
    with open(d / "eda.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(_fmt(v) + "\n" for v in rec.eda)
    with open(d / "acc.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(",".join(_fmt(c) for c in row) + "\n" for row in rec.acc_xyz)
    with open(d / "labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        for iv in rec.labels:
            fh.write(f"{iv.start_s},{iv.end_s},{iv.label.value}\n")
    return d


# ---------------------------------------------------------------------------
# Synthetic data

@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic stress/no-stress generator.

    ``separation`` scales every stress-specific deviation; at 0 the two
    conditions are drawn from the same generator.
    """

    n_subjects: int = 6
    seconds_per_condition: int = 120
    separation: float = 1.0
    base_heart_hz: float = 1.0
    stress_heart_delta_hz: float = 0.8
    heart_jitter_hz: float = 0.1
    eda_level: float = 2.0
    eda_stress_drift: float = 0.03  # microsiemens per second
    eda_scr_rate_hz: float = 0.3
    eda_scr_amplitude: float = 0.4
    acc_burst_rate_hz: float = 0.4
    acc_burst_amplitude: float = 0.6
    noise: float = 0.05
    subject_prefix: str = "S"
    first_subject: int = 2

    def __post_init__(self):
        if self.n_subjects <= 0:
            raise ValueError("n_subjects must be positive")
        if self.seconds_per_condition <= 0:
            raise ValueError("seconds_per_condition must be positive")
        if self.separation < 0:
            raise ValueError("separation must be non-negative")


def _scr_train(t: np.ndarray, onsets: Iterable[float], amplitude: float) -> np.ndarray:
    # skin-conductance responses: fast rise, slow exponential recovery
    out = np.zeros_like(t)
    for t0 in onsets:
        dt = t - t0
        m = dt > 0
        out[m] += amplitude * (1 - np.exp(-dt[m] / 0.75)) * np.exp(-dt[m] / 4.0)
    return out


def _condition(rng: np.random.Generator, cfg: SynthConfig, secs: int, stress: float,
               heart_hz: float, rates: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sep = stress * cfg.separation

    t = np.arange(secs * rates["ppg"]) / rates["ppg"]
    f = heart_hz + sep * cfg.stress_heart_delta_hz
    # slow frequency wander so beats are not perfectly periodic
    inst_f = f + 0.05 * np.sin(2 * np.pi * 0.05 * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(inst_f) / rates["ppg"] + rng.uniform(0, 2 * np.pi)
    ppg = np.sin(phase) + 0.3 * np.sin(2 * phase + 0.8)
    ppg += cfg.noise * rng.standard_normal(t.size)

    te = np.arange(secs * rates["eda"]) / rates["eda"]
    n_scr = rng.poisson(sep * cfg.eda_scr_rate_hz * secs)
    eda = cfg.eda_level + sep * cfg.eda_stress_drift * te
    eda = eda + _scr_train(te, np.sort(rng.uniform(0, secs, n_scr)), cfg.eda_scr_amplitude)
    eda += 0.2 * cfg.noise * rng.standard_normal(te.size)

    ta = np.arange(secs * rates["acc"]) / rates["acc"]
    acc = np.tile([0.0, 0.0, 1.0], (ta.size, 1)) + cfg.noise * rng.standard_normal((ta.size, 3))
    n_burst = rng.poisson(sep * cfg.acc_burst_rate_hz * secs)
    for t0 in rng.uniform(0, secs, n_burst):
        m = (ta >= t0) & (ta < t0 + 0.75)
        burst = cfg.acc_burst_amplitude * np.sin(2 * np.pi * 6.0 * (ta[m] - t0))
        acc[m] += np.outer(burst, rng.normal(size=3))
    return ppg, eda, acc


def generate_synthetic(config: SynthConfig, seed: int) -> list[Recording]:
    """Deterministic synthetic cohort.

    Each subject has a no-stress block followed by a stress block. Stress
    raises the PPG beat frequency, adds EDA drift with phasic responses,
    and injects ACC vibration bursts.
    """
    rng = np.random.default_rng(seed)
    rates = dict(DEFAULT_RATES)
    secs = config.seconds_per_condition
    out = []
    for k in range(config.n_subjects):
        heart_hz = config.base_heart_hz + rng.uniform(-1, 1) * config.heart_jitter_hz
        parts = [_condition(rng, config, secs, s, heart_hz, rates) for s in (0.0, 1.0)]
        ppg, eda, acc = (np.concatenate(ch) for ch in zip(*parts))
        labels = (
            LabelInterval(0, secs, Label.NOSTRESS),
            LabelInterval(secs, 2 * secs, Label.STRESS),
        )
        sid = f"{config.subject_prefix}{config.first_subject + k}"
        out.append(Recording(sid, ppg, eda, acc, labels, rates))
    return out


# ---------------------------------------------------------------------------
# Preconditioning

def detrend_linear(channel: Sequence[float]) -> np.ndarray:
    """Subtract the least-squares line over sample index."""
    x = np.asarray(channel, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("detrend_linear needs a 1-d sequence of at least 2 samples")
    n = x.size
    # center the index so slope and intercept decouple
    idx = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    slope = np.dot(idx, x - x.mean()) / np.dot(idx, idx)
    out = x - x.mean() - slope * idx
    # second pass removes the residual rounding left by the first
    out -= out.mean() + (np.dot(idx, out) / np.dot(idx, idx)) * idx
    return out


def acc_magnitude(acc_xyz) -> np.ndarray:
    """Euclidean norm of each (x, y, z) sample."""
    a = np.asarray(acc_xyz, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return np.sqrt(np.sum(a * a, axis=1))


def precondition(rec: Recording, detrend: bool = True) -> Recording:
    """Detrend PPG and EDA over the whole recording; ACC is left untouched."""
    if not detrend:
        return rec
    return replace(rec, ppg=detrend_linear(rec.ppg), eda=detrend_linear(rec.eda))


def split_by_subject(recordings: Sequence[Recording], test_ids) -> tuple[list, list]:
    """Partition recordings into (train, test) by subject id."""
    test_ids = set(test_ids)
    if not test_ids:
        raise ValueError("test_ids must be non-empty")
    known = {r.subject_id for r in recordings}
    unknown = sorted(test_ids - known)
    if unknown:
        raise ValueError(f"unknown test subject id(s): {', '.join(unknown)}")
    train = [r for r in recordings if r.subject_id not in test_ids]
    test = [r for r in recordings if r.subject_id in test_ids]
    if not train:
        raise ValueError("split leaves no training subjects")
    return train, test


def list_recording_dirs(root: str | os.PathLike) -> list[Path]:
    """Recording directories under ``root`` (or ``root`` itself), sorted by name."""
    root = Path(root)
    if (root / "subject.json").is_file():
        return [root]
    dirs = sorted(p for p in root.iterdir() if (p / "subject.json").is_file()) if root.is_dir() else []
    if not dirs:
        raise DataValidationError(f"no recording directories found under {root}")
    return dirs

