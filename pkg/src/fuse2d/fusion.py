"""Windowing and 32x32 signal-matrix assembly.

Each window's channels are min-max normalized, low-rate channels are
stretched by per-sample repetition, and the resulting bands are written
row-major into a square matrix in the order given by an arrangement.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import Label, Recording, acc_magnitude

SIGNALS = ("P", "E", "A")
SIGNAL_CHANNEL = {"P": "ppg", "E": "eda", "A": "acc"}
FILL = "Fill"
FILL_POLICIES = ("zeros", "repeat")


@dataclass(frozen=True)
class WindowConfig:
    window_s: int = 5
    stride_s: int = 1

    def __post_init__(self):
        for name in ("window_s", "stride_s"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v}")


@dataclass(frozen=True, eq=False)
class Window:
    subject_id: str
    start_s: int
    label: Label
    ppg: np.ndarray
    eda: np.ndarray
    acc: np.ndarray
    normalized: bool = False

    def channel(self, tag: str) -> np.ndarray:
        return getattr(self, SIGNAL_CHANNEL[tag])


@dataclass(frozen=True)
class Arrangement:
    """Top-to-bottom order of signal bands, e.g. ``("E", "A", "P")``."""

    order: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        if len(set(self.order)) != len(self.order):
            raise ValueError(f"arrangement repeats a signal: {''.join(self.order)}")
        if not self.order:
            raise ValueError("empty arrangement")

    @classmethod
    def from_name(cls, name: str) -> "Arrangement":
        name = name.strip().upper()
        bad = set(name) - set(SIGNALS)
        if bad:
            raise ValueError(f"unknown signal(s) {''.join(sorted(bad))} in arrangement {name!r}")
        return cls(tuple(name))

    @property
    def name(self) -> str:
        return "".join(self.order)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class BandLayout:
    repetition: dict = field(default_factory=lambda: {"P": 1, "E": 8, "A": 1})
    fill: str = "zeros"
    side: int = 32

    def __post_init__(self):
        if self.fill not in FILL_POLICIES:
            raise ValueError(f"fill must be one of {FILL_POLICIES}, got {self.fill!r}")
        for tag, r in self.repetition.items():
            if int(r) != r or r < 1:
                raise ValueError(f"repetition for {tag} must be a positive integer")

    def band_cells(self, counts: dict) -> dict:
        """Cells per band given raw sample counts per signal tag."""
        cells = {tag: n * self.repetition.get(tag, 1) for tag, n in counts.items()}
        total = sum(cells.values())
        if total > self.side * self.side:
            raise ValueError(
                f"layout overflow: {total} cells exceed {self.side}x{self.side}"
            )
        for tag, n in cells.items():
            if n % self.side:
                raise ValueError(
                    f"band {tag} has {n} cells, not a multiple of the row width {self.side}"
                )
        return cells


@dataclass(frozen=True, eq=False)
class SignalMatrix:
    cells: np.ndarray
    band_map: tuple[str, ...]
    subject_id: str = ""
    start_s: int = 0
    arrangement: str = ""
    label: Label | None = None

    @property
    def side(self) -> int:
        return self.cells.shape[0]


def window_starts(duration_s: int, cfg: WindowConfig) -> range:
    """Start times of every window fitting in ``duration_s`` seconds."""
    if duration_s < cfg.window_s:
        raise ValueError(
            f"recording of {duration_s} s is shorter than the {cfg.window_s} s window"
        )
    return range(0, duration_s - cfg.window_s + 1, cfg.stride_s)


def slide_windows(rec: Recording, cfg: WindowConfig = WindowConfig()) -> list[Window]:
    """Cut ``rec`` into labelled windows.

    Windows not fully inside a single Stress or NoStress interval are
    dropped. ACC is reduced to its magnitude here.
    """
    rp, re_, ra = rec.rates["ppg"], rec.rates["eda"], rec.rates["acc"]
    acc = acc_magnitude(rec.acc_xyz)
    keep = [iv for iv in rec.labels if iv.label is not Label.IGNORE]
    out = []
    for s in window_starts(rec.duration_s, cfg):
        e = s + cfg.window_s
        iv = next((iv for iv in keep if iv.contains(s, e)), None)
        if iv is None:
            continue
        out.append(Window(
            subject_id=rec.subject_id,
            start_s=s,
            label=iv.label,
            ppg=rec.ppg[s * rp:e * rp].copy(),
            eda=rec.eda[s * re_:e * re_].copy(),
            acc=acc[s * ra:e * ra].copy(),
        ))
    return out


def _minmax(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite value in {name} channel")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.full_like(x, 0.5)
    # clip guards against 1 ulp overshoot from the division
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def normalize_window(w: Window) -> Window:
    """Min-max scale each channel of ``w`` into [0, 1] (constant -> 0.5)."""
    return Window(
        subject_id=w.subject_id, start_s=w.start_s, label=w.label,
        ppg=_minmax(w.ppg, "ppg"), eda=_minmax(w.eda, "eda"), acc=_minmax(w.acc, "acc"),
        normalized=True,
    )


def repeat_samples(samples: Sequence[float], factor: int) -> np.ndarray:
    if int(factor) != factor or factor < 1:
        raise ValueError(f"repetition factor must be a positive integer, got {factor}")
    return np.repeat(np.asarray(samples), int(factor))


def assemble_matrix(w: Window, arr: Arrangement, layout: BandLayout = BandLayout()) -> SignalMatrix:
    """Write the bands of a normalized window into a square matrix.

    Bands go row-major in arrangement order; rows left over after the last
    band are either zero (``fill="zeros"``, tagged Fill) or a cyclic
    continuation of the band sequence (``fill="repeat"``).
    """
    side = layout.side
    layout.band_cells({tag: len(w.channel(tag)) for tag in arr.order})

    bands, tags = [], []
    for tag in arr.order:
        vals = np.asarray(w.channel(tag), dtype=np.float64)
        if not np.all(np.isfinite(vals)) or vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError(f"window channel {tag} is not normalized to [0, 1]")
        band = repeat_samples(vals, layout.repetition.get(tag, 1))
        bands.append(band)
        tags.extend([tag] * (band.size // side))

    seq = np.concatenate(bands)
    n_fill = side * side - seq.size
    if layout.fill == "zeros":
        cells = np.concatenate([seq, np.zeros(n_fill)])
        tags.extend([FILL] * (n_fill // side))
    else:
        reps = -(-(side * side) // seq.size)
        cells = np.tile(seq, reps)[: side * side]
        tags = (tags * reps)[:side]

    return SignalMatrix(
        cells=cells.reshape(side, side),
        band_map=tuple(tags),
        subject_id=w.subject_id,
        start_s=w.start_s,
        arrangement=arr.name,
        label=w.label,
    )


def enumerate_arrangements(signals: Sequence[str] = SIGNALS) -> list[Arrangement]:
    """All permutations of ``signals`` in lexicographic order."""
    if len(set(signals)) != len(signals):
        raise ValueError(f"duplicate signal names in {list(signals)}")
    return [Arrangement(p) for p in itertools.permutations(sorted(signals))]


def select_arrangements(selector: str, signals: Sequence[str] = SIGNALS) -> list[Arrangement]:
    """Parse ``"all"`` or a comma list such as ``"PEA,EPA,EAP"``."""
    if selector.strip().lower() == "all":
        return enumerate_arrangements(signals)
    out = []
    for name in selector.split(","):
        if not name.strip():
            continue
        arr = Arrangement.from_name(name)
        if sorted(arr.order) != sorted(signals):
            raise ValueError(f"arrangement {arr.name} is not a permutation of {''.join(signals)}")
        if arr in out:
            raise ValueError(f"arrangement {arr.name} listed twice")
        out.append(arr)
    if not out:
        raise ValueError("empty arrangement selector")
    return out


def matrix_filename(m: SignalMatrix) -> str:
    return f"{m.subject_id}_{m.start_s}_{m.arrangement}.csv"


def write_matrix_csv(m: SignalMatrix, out_dir: str | os.PathLike) -> Path:
    path = Path(out_dir) / matrix_filename(m)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in m.cells:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
    return path


def read_matrix_csv(path: str | os.PathLike) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
