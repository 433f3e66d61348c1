"""Image datasets on disk: PNG files plus a manifest.csv index."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass
from functools import partial
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .colorize import UPSCALE, downsample_blocks, read_png, render, write_png
from .fusion import (
    Arrangement,
    BandLayout,
    WindowConfig,
    assemble_matrix,
    normalize_window,
    slide_windows,
    write_matrix_csv,
)
from .ingest import DataValidationError, Label, Recording, precondition

MANIFEST = "manifest.csv"
MANIFEST_COLUMNS = ("path", "subject", "start_s", "arrangement", "scheme", "label")
LABEL_INDEX = {Label.NOSTRESS: 0, Label.STRESS: 1}
INDEX_LABEL = {v: k for k, v in LABEL_INDEX.items()}


@dataclass(frozen=True)
class ManifestRow:
    path: str
    subject: str
    start_s: int
    arrangement: str
    scheme: str
    label: str


def recording_windows(rec: Recording, wcfg: WindowConfig = WindowConfig(), detrend: bool = True):
    """Normalized, labelled windows of one recording."""
    return [normalize_window(w) for w in slide_windows(precondition(rec, detrend), wcfg)]


def _render_recording(rec, out_dir, arrangements, scheme, layout, wcfg, detrend, factor, matrix_dir):
    rows = []
    for w in recording_windows(rec, wcfg, detrend):
        for arr in arrangements:
            m = assemble_matrix(w, arr, layout)
            if matrix_dir is not None:
                write_matrix_csv(m, matrix_dir)
            img = render(m, scheme, factor)
            name = img.filename()
            write_png(img, Path(out_dir) / name)
            rows.append(ManifestRow(name, rec.subject_id, w.start_s, arr.name, scheme, w.label.value))
    return rows


def write_image_dataset(recordings: Sequence[Recording], out_dir, arrangements: Sequence[Arrangement],
                        scheme: str = "custom", layout: BandLayout = BandLayout(),
                        wcfg: WindowConfig = WindowConfig(), detrend: bool = True,
                        factor: int = UPSCALE, workers: int = 1, dump_matrices: bool = False):
    """Render every kept window under every arrangement and write the manifest.

    Output is identical for any ``workers`` value; rows follow recording
    order, then window start, then arrangement order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix_dir = None
    if dump_matrices:
        matrix_dir = out_dir / "matrices"
        matrix_dir.mkdir(exist_ok=True)
    job = partial(_render_recording, out_dir=out_dir, arrangements=list(arrangements), scheme=scheme,
                  layout=layout, wcfg=wcfg, detrend=detrend, factor=factor, matrix_dir=matrix_dir)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rec = list(pool.map(job, recordings))
    else:
        per_rec = [job(r) for r in recordings]
    rows = [row for part in per_rec for row in part]
    if not rows:
        raise DataValidationError("no windows survived label filtering; nothing to write")
    write_manifest(rows, out_dir)
    return rows


def write_manifest(rows: Iterable[ManifestRow], out_dir) -> Path:
    path = Path(out_dir) / MANIFEST
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for row in rows:
            w.writerow(astuple(row))
    return path


def read_manifest(dir_path) -> list[ManifestRow]:
    """Parse ``manifest.csv`` and check that every listed image exists."""
    d = Path(dir_path)
    path = d / MANIFEST
    if not path.is_file():
        raise DataValidationError(f"missing manifest: {path}")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != MANIFEST_COLUMNS:
            raise DataValidationError(f"{path}: unexpected header {header}")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(MANIFEST_COLUMNS):
                raise DataValidationError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} columns")
            try:
                row = ManifestRow(rec[0], rec[1], int(rec[2]), rec[3], rec[4], Label.parse(rec[5]).value)
            except ValueError as exc:
                raise DataValidationError(f"{path}:{lineno}: {exc}") from None
            if not (d / row.path).is_file():
                raise DataValidationError(f"{path}:{lineno}: image {row.path} listed but not found")
            rows.append(row)
    if not rows:
        raise DataValidationError(f"{path}: manifest lists no images")
    return rows


def fit_to_input(images: np.ndarray, side: int) -> np.ndarray:
    """Bring (N, S, S, 3) images to ``side`` by exact block sampling.

    Rendered images are nearest-neighbour upscales, so sampling one pixel
    per block recovers the smaller rendering exactly.
    """
    s = images.shape[1]
    if s == side:
        return images
    if s % side:
        raise ValueError(f"image side {s} is not a multiple of model input side {side}")
    return downsample_blocks(images, s // side)


def load_image_dataset(dirs: Sequence, side: int | None = None, exclude_subjects=(),
                       include_subjects=None):
    """Read one or more manifest directories into arrays.

    Returns ``(images uint8 (N, H, W, 3), labels int, rows)``.
    """
    images, labels, rows = [], [], []
    for d in dirs:
        for row in read_manifest(d):
            if row.subject in exclude_subjects:
                continue
            if include_subjects is not None and row.subject not in include_subjects:
                continue
            img = read_png(Path(d) / row.path)
            if side is not None:
                img = fit_to_input(img[None], side)[0]
            images.append(img)
            labels.append(LABEL_INDEX[Label(row.label)])
            rows.append(row)
    if not rows:
        raise DataValidationError(f"no images selected from {', '.join(map(str, dirs))}")
    return np.stack(images), np.asarray(labels, dtype=int), rows


def subjects_of(rows: Iterable[ManifestRow]) -> list[str]:
    return sorted({r.subject for r in rows})

