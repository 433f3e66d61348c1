"""Subject-independent comparison of arrangement training strategies.

Mirrors the evaluation grid of single-arrangement training (PEA, EAP, EPA)
against two-stage training that starts on EAP and finetunes on all three.
Works on any recordings, synthetic or converted from a real dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cnn.model import PROFILES, predict
from .cnn.train import Dataset, TrainConfig, fit_two_stage, scale_images
from .colorize import colorize, upscale_nearest
from .dataset import LABEL_INDEX, recording_windows
from .fusion import Arrangement, BandLayout, WindowConfig, assemble_matrix
from .ingest import Recording, split_by_subject
from .metrics import EvalReport, evaluate

SINGLE = ("PEA", "EAP", "EPA")
COMBINED = "combined"


@dataclass
class StrategyResult:
    name: str
    train_acc: float
    report: EvalReport


def render_windows(windows, arrangement: str, scheme: str = "custom",
                   layout: BandLayout = BandLayout(), upscale: int = 1) -> np.ndarray:
    arr = Arrangement.from_name(arrangement)
    return np.stack([
        upscale_nearest(colorize(assemble_matrix(w, arr, layout), scheme), upscale, layout.side)
        for w in windows
    ])


def _dataset(windows, arrangement, scheme, layout, upscale, weight=1.0):
    labels = np.array([LABEL_INDEX[w.label] for w in windows])
    images = render_windows(windows, arrangement, scheme, layout, upscale)
    return Dataset(images, labels, np.full(len(labels), float(weight)))


def run_protocol(recordings: Sequence[Recording], test_ids, strategies=SINGLE + (COMBINED,),
                 cfg: TrainConfig | None = None, scheme: str = "custom",
                 layout: BandLayout = BandLayout(), wcfg: WindowConfig = WindowConfig(),
                 stage2_weights=(1.0, 1.0), detrend: bool = True) -> dict:
    """Train and test each strategy on a subject-independent split.

    ``stage2_weights`` are the per-sample weights of the PEA and EPA sets
    added in the second stage of the combined strategy.
    """
    cfg = cfg or TrainConfig(profile="tiny")
    side = PROFILES[cfg.profile][0]
    upscale = side // layout.side
    train_recs, test_recs = split_by_subject(recordings, test_ids)
    train_w = [w for r in train_recs for w in recording_windows(r, wcfg, detrend)]
    test_w = [w for r in test_recs for w in recording_windows(r, wcfg, detrend)]
    if not train_w or not test_w:
        raise ValueError("no labelled windows on one side of the split")

    results = {}
    for name in strategies:
        if name == COMBINED:
            stage1 = _dataset(train_w, "EAP", scheme, layout, upscale)
            stage2 = [_dataset(train_w, a, scheme, layout, upscale, wt)
                      for a, wt in zip(("PEA", "EPA"), stage2_weights)]
            model, history = fit_two_stage(stage1, stage2, cfg)
            test_sets = ["EAP", "PEA", "EPA"]
        else:
            model, history = fit_two_stage(_dataset(train_w, name, scheme, layout, upscale), None, cfg)
            test_sets = [name]
        # the combined model is tested on every arrangement of the held-out windows
        test = Dataset.concat([_dataset(test_w, a, scheme, layout, upscale) for a in test_sets])
        pred, probs = predict(model, scale_images(test.images, model.dtype))
        report = evaluate(pred, test.labels, probs[:, 0], meta={
            "strategy": name, "arrangements": ",".join(test_sets), "seed": cfg.seed,
            "test_subjects": ",".join(sorted(test_ids)), "n_test": int(len(test)),
        })
        results[name] = StrategyResult(name, history[-1].train_acc, report)
    return results
