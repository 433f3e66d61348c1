"""Acceptance gate: one test per criterion, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py``; the terminal summary lists one
PASS/FAIL line per criterion.
"""

import itertools
import time

import numpy as np
import pytest

from fuse2d.cli import main
from fuse2d.cnn import Dataset, TrainConfig, fit_two_stage, softmax
from fuse2d.colorize import (
    CUSTOM_CLAMP,
    colorize,
    custom_hsv,
    downsample_blocks,
    map_manual_rgb,
    upscale_nearest,
)
from fuse2d.fusion import (
    FILL,
    BandLayout,
    Window,
    WindowConfig,
    assemble_matrix,
    enumerate_arrangements,
    slide_windows,
    window_starts,
)
from fuse2d.gradcheck import check_gradients
from fuse2d.ingest import Label, SynthConfig, generate_synthetic
from fuse2d.metrics import classification_metrics, confusion_counts, roc_auc
from fuse2d.protocol import run_protocol

from conftest import make_recording
from test_cnn import separable_images
from test_metrics import brute_force

SEEDS = range(5)


def random_window(rng):
    return Window("S1", 0, Label.NOSTRESS, rng.uniform(size=320), rng.uniform(size=20), rng.uniform(size=160),
                  normalized=True)


@pytest.mark.criterion(1, "gradient check, max relative error < 1e-3, < 2 min")
def test_gradient_correctness():
    t0 = time.perf_counter()
    res = check_gradients(h=1e-4, seed=0)
    assert res.max_rel_error < 1e-3, res.per_param
    assert time.perf_counter() - t0 < 120


@pytest.mark.criterion(2, "softmax sums to 1 and is shift invariant within 1e-9")
def test_softmax_contract():
    rng = np.random.default_rng(2)
    z = rng.uniform(-1e3, 1e3, (10_000, 2))
    shift = rng.uniform(-1e3, 1e3, (10_000, 1))
    p = softmax(z)
    assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-9
    assert np.max(np.abs(softmax(z + shift) - p)) <= 1e-9
    assert np.max(np.abs(softmax(np.zeros((1, 2))) - 0.5)) <= 1e-12


@pytest.mark.criterion(3, "arrangements are exact row-block permutations; band cells 320/160/160 + 384")
def test_matrix_assembly_oracle():
    rng = np.random.default_rng(3)
    rows = {"P": 10, "E": 5, "A": 5}
    for _ in range(100):
        w = random_window(rng)
        ident = assemble_matrix(w, enumerate_arrangements()[0])  # AEP, the sorted order
        blocks, r = {}, 0
        for tag in ident.arrangement:
            blocks[tag] = ident.cells[r:r + rows[tag]]
            r += rows[tag]
        assert ident.arrangement == "AEP"
        for arr in enumerate_arrangements():
            m = assemble_matrix(w, arr)
            expected = np.concatenate([blocks[t] for t in arr.order] + [np.zeros((12, 32))])
            assert np.array_equal(m.cells, expected)
            bm = np.array(m.band_map)
            for tag in "PEA":
                assert np.array_equal(np.sort(m.cells[bm == tag].ravel()),
                                      np.sort(ident.cells[np.array(ident.band_map) == tag].ravel()))
    counts = {t: int(np.sum(np.array(ident.band_map) == t)) * 32 for t in ("P", "E", "A", FILL)}
    assert counts == {"P": 320, "E": 160, "A": 160, FILL: 384}
    assert BandLayout().band_cells({"P": 320, "E": 20, "A": 160}) == {"P": 320, "E": 160, "A": 160}


@pytest.mark.criterion(4, "window count equals floor((T-W)/S)+1 for the whole grid")
def test_window_count_formula():
    for W, S in itertools.product((2, 5, 10), (1, 2, 5)):
        cfg = WindowConfig(W, S)
        for T in range(W, W + 51):
            brute = sum(1 for s in range(T) if s % S == 0 and s + W <= T)
            assert len(window_starts(T, cfg)) == brute == (T - W) // S + 1
            if T <= W + 10:
                rec = make_recording(seconds=T)
                assert len(slide_windows(rec, cfg)) == brute


@pytest.mark.criterion(5, "colour map properties and exact upscale/downsample recovery")
def test_colorization_properties():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = assemble_matrix(random_window(rng), enumerate_arrangements()[3])
        g = colorize(m, "gray")
        assert np.array_equal(g[..., 0], g[..., 1]) and np.array_equal(g[..., 1], g[..., 2])
        rgb = map_manual_rgb(m)
        signal_rows = np.array(m.band_map) != FILL
        nonzero = np.count_nonzero(rgb[signal_rows], axis=-1)
        cells = m.cells[signal_rows]
        # a cell whose value rounds to byte 0 has no non-zero channel at all
        assert np.all(nonzero[cells >= 0.5 / 255] == 1)
        assert np.all(nonzero <= 1)
        assert not rgb[~signal_rows].any()
        img = colorize(m, "custom")
        up = upscale_nearest(img)
        blocks = up.reshape(32, 4, 32, 4, 3)
        assert np.all(blocks == blocks[:, :1, :, :1])
        assert np.array_equal(downsample_blocks(up, 4), img)
    grid = np.round(np.arange(0, 96) * 0.01, 2)
    _, _, value = custom_hsv(grid)
    assert np.all(np.diff(value) > 0)
    _, _, top = custom_hsv(np.linspace(CUSTOM_CLAMP, 1.0, 50))
    assert np.all(top == top[0])


@pytest.mark.criterion(6, "metrics equal brute force exactly; worked example; AUC 0.75")
def test_metrics_oracle():
    import warnings

    rng = np.random.default_rng(6)
    for _ in range(1000):
        n = int(rng.integers(1, 80))
        pred, truth = rng.integers(0, 2, n), rng.integers(0, 2, n)
        _, ratios = brute_force(pred.tolist(), truth.tolist(), 0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            assert classification_metrics(confusion_counts(pred, truth)) == tuple(float(r) for r in ratios)
    pred = [0] * 3 + [0] * 1 + [1] * 2 + [1] * 4
    truth = [0] * 3 + [1] * 1 + [0] * 2 + [1] * 4
    p, r, f1, acc = classification_metrics(confusion_counts(pred, truth))
    assert (p, r, acc) == (0.75, 0.6, 0.7) and abs(f1 - 0.6667) <= 1e-4
    assert roc_auc([0.9, 0.8, 0.4, 0.3], [0, 1, 0, 1]) == 0.75


@pytest.mark.slow
@pytest.mark.criterion(7, "64 separable images reach train accuracy 1.0 within 16 epochs, < 5 min")
def test_overfit_sanity():
    t0 = time.perf_counter()
    x, y = separable_images(64, seed=7)
    _, history = fit_two_stage(Dataset(x, y), cfg=TrainConfig(profile="tiny", epochs=16, seed=7))
    assert max(h.train_acc for h in history) == 1.0
    assert time.perf_counter() - t0 < 300


@pytest.fixture(scope="module")
def benchmark_results():
    """Held-out EAP single-stage accuracy on the synthetic benchmark, per seed."""
    out, t0 = {}, time.perf_counter()
    for seed in SEEDS:
        recs = generate_synthetic(SynthConfig(n_subjects=6), seed=seed)
        test_id = recs[-1].subject_id
        res = run_protocol(recs, {test_id}, ("EAP",), TrainConfig(profile="tiny", seed=seed))
        out[seed] = res["EAP"].report.accuracy
    return out, time.perf_counter() - t0


@pytest.mark.slow
@pytest.mark.criterion(8, "synthetic benchmark: held-out accuracy >= 0.90 on >= 4 of 5 seeds, < 15 min")
def test_synthetic_benchmark(benchmark_results):
    acc, elapsed = benchmark_results
    print("held-out EAP accuracy per seed:", acc, f"({elapsed:.0f} s)")
    assert sum(a >= 0.90 for a in acc.values()) >= 4
    assert elapsed < 15 * 60


@pytest.mark.criterion(9, "stage 2 leaves conv parameters and optimizer state bit-identical")
def test_two_stage_contract():
    x, y = separable_images(64, seed=9)
    cfg = TrainConfig(profile="tiny", epochs=3, batch_size=16, seed=9)
    after1, _ = fit_two_stage(Dataset(x, y), cfg=cfg)
    after2, hist = fit_two_stage(Dataset(x, y), [Dataset(x[:, ::-1], y), Dataset(x[:, :, ::-1], y)], cfg)
    assert {h.stage for h in hist} == {1, 2}
    for i, spec in enumerate(after2.specs):
        if spec.kind == "conv":
            for k in ("W", "b"):
                assert after2.layers[i].params[k].tobytes() == after1.layers[i].params[k].tobytes()
                assert after2.adam[i]["m"][k].tobytes() == after1.adam[i]["m"][k].tobytes()
                assert after2.adam[i]["v"][k].tobytes() == after1.adam[i]["v"][k].tobytes()
            assert after2.adam[i]["t"] == after1.adam[i]["t"]
        if spec.kind == "dense":
            assert not np.array_equal(after2.layers[i].params["W"], after1.layers[i].params["W"])


@pytest.mark.slow
def test_two_stage_directional(benchmark_results):
    """Best-effort comparison of combined training against EAP alone; reported, not gated."""
    single, _ = benchmark_results
    combined = {}
    for seed in SEEDS:
        recs = generate_synthetic(SynthConfig(n_subjects=6), seed=seed)
        res = run_protocol(recs, {recs[-1].subject_id}, ("combined",), TrainConfig(profile="tiny", seed=seed))
        combined[seed] = res["combined"].report.accuracy
    gap = np.mean(list(combined.values())) - np.mean(list(single.values()))
    verdict = "meets" if gap >= -0.02 else "misses"
    print(f"combined {combined} vs EAP {single}: mean gap {gap:+.4f} ({verdict} the -0.02 margin)")


@pytest.mark.slow
@pytest.mark.criterion(10, "synth -> images -> train -> eval twice gives byte-identical outputs")
def test_determinism(tmp_path):
    def pipeline(root):
        steps = [
            ["synth", "--subjects", "3", "--seconds", "15", "--seed", "11", "--out", root / "data"],
            ["images", "--data", root / "data", "--out", root / "img", "--arrangement", "EAP,PEA",
             "--workers", "1"],
            ["train", "--stage1", root / "img", "--profile", "tiny", "--epochs", "2", "--seed", "11",
             "--test-subjects", "S4", "--out", root / "model.f2dm"],
            ["eval", "--model", root / "model.f2dm", "--data", root / "img", "--out", root / "report.json",
             "--allow-leak"],
        ]
        for argv in steps:
            assert main([str(a) for a in argv]) == 0

    pipeline(tmp_path / "a")
    pipeline(tmp_path / "b")
    pngs = sorted(p.name for p in (tmp_path / "a" / "img").glob("*.png"))
    assert pngs
    for name in pngs:
        assert (tmp_path / "a/img" / name).read_bytes() == (tmp_path / "b/img" / name).read_bytes()
    for name in ("model.f2dm", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
