import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuse2d.fusion import (
    FILL,
    Arrangement,
    BandLayout,
    Window,
    WindowConfig,
    assemble_matrix,
    enumerate_arrangements,
    normalize_window,
    read_matrix_csv,
    repeat_samples,
    select_arrangements,
    slide_windows,
    window_starts,
    write_matrix_csv,
)
from fuse2d.ingest import Label

from conftest import make_recording

PEA = Arrangement.from_name("PEA")


def const_window(p=1.0, e=0.5, a=0.0):
    return Window("S1", 0, Label.STRESS, np.full(320, p), np.full(20, e), np.full(160, a), normalized=True)


def random_window(rng):
    return normalize_window(Window("S1", 3, Label.NOSTRESS, rng.normal(size=320),
                                   rng.normal(size=20), rng.normal(size=160)))


class TestSlideWindows:
    def test_sixty_seconds_single_label(self):
        assert len(slide_windows(make_recording(60))) == 56

    def test_boundary(self):
        assert len(slide_windows(make_recording(5))) == 1

    def test_too_short(self):
        with pytest.raises(ValueError):
            slide_windows(make_recording(4))

    def test_straddling_windows_dropped(self):
        rec = make_recording(60, labels=((0, 30, "stress"), (30, 60, "nostress")))
        ws = slide_windows(rec)
        starts = [w.start_s for w in ws]
        assert not set(range(26, 30)) & set(starts)
        assert len(ws) == 56 - 4
        assert all(w.label is Label.STRESS for w in ws if w.start_s <= 25)
        assert all(w.label is Label.NOSTRESS for w in ws if w.start_s >= 30)

    def test_ignore_and_unlabelled_dropped(self):
        rec = make_recording(30, labels=((0, 10, "ignore"), (20, 30, "stress")))
        assert [w.start_s for w in slide_windows(rec)] == list(range(20, 26))

    def test_sample_counts_and_content(self):
        rec = make_recording(10)
        w = slide_windows(rec)[2]
        assert (len(w.ppg), len(w.eda), len(w.acc)) == (320, 20, 160)
        np.testing.assert_array_equal(w.ppg, rec.ppg[128:448])
        np.testing.assert_array_equal(w.eda, rec.eda[8:28])
        np.testing.assert_allclose(w.acc, np.linalg.norm(rec.acc_xyz[64:224], axis=1), rtol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from([2, 5, 10]), st.sampled_from([1, 2, 5]), st.integers(0, 50))
    def test_count_formula(self, w, s, extra):
        t = w + extra
        brute = sum(1 for start in range(t) if start % s == 0 and start + w <= t)
        assert len(window_starts(t, WindowConfig(w, s))) == (t - w) // s + 1 == brute

    @pytest.mark.parametrize("kw", [{"window_s": 0}, {"stride_s": 0}, {"window_s": 2.5}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            WindowConfig(**kw)


class TestNormalize:
    def test_endpoints(self):
        w = Window("S", 0, Label.STRESS, np.arange(2, 642, 2.0), np.arange(20.0), np.arange(160.0))
        n = normalize_window(w)
        assert n.ppg.min() == 0.0 and n.ppg.max() == 1.0
        assert n.normalized

    def test_constant_channel(self):
        w = Window("S", 0, Label.STRESS, np.arange(320.0), np.full(20, 3.3), np.arange(160.0))
        np.testing.assert_array_equal(normalize_window(w).eda, 0.5)

    def test_order_preserved(self, rng):
        x = rng.normal(size=320)
        n = normalize_window(Window("S", 0, Label.STRESS, x, np.arange(20.0), np.arange(160.0))).ppg
        assert np.all((n >= 0) & (n <= 1))
        np.testing.assert_array_equal(np.argsort(x, kind="stable"), np.argsort(n, kind="stable"))

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite(self, bad):
        eda = np.arange(20.0)
        eda[3] = bad
        with pytest.raises(ValueError, match="eda"):
            normalize_window(Window("S", 0, Label.STRESS, np.arange(320.0), eda, np.arange(160.0)))


class TestRepeat:
    def test_definition(self):
        assert repeat_samples(["a", "b"], 3).tolist() == ["a", "a", "a", "b", "b", "b"]

    def test_identity(self):
        np.testing.assert_array_equal(repeat_samples([1.0, 2.0, 3.0], 1), [1.0, 2.0, 3.0])

    def test_eda_band(self):
        assert repeat_samples(np.arange(20), 8).size == 160

    def test_zero_factor(self):
        with pytest.raises(ValueError):
            repeat_samples([1.0], 0)


class TestAssemble:
    def test_constant_pea(self):
        m = assemble_matrix(const_window(), PEA)
        assert m.cells.shape == (32, 32)
        assert np.all(m.cells[0:10] == 1.0)
        assert np.all(m.cells[10:15] == 0.5)
        assert np.all(m.cells[15:20] == 0.0)
        assert np.all(m.cells[20:32] == 0.0)
        assert m.band_map == ("P",) * 10 + ("E",) * 5 + ("A",) * 5 + (FILL,) * 12

    def test_constant_eap(self):
        m = assemble_matrix(const_window(), Arrangement.from_name("EAP"))
        assert np.all(m.cells[0:5] == 0.5)
        assert np.all(m.cells[5:10] == 0.0)
        assert np.all(m.cells[10:20] == 1.0)
        assert m.band_map == ("E",) * 5 + ("A",) * 5 + ("P",) * 10 + (FILL,) * 12

    def test_ramp_row_major(self):
        w = const_window()
        w = Window("S", 0, Label.STRESS, np.arange(320) / 319, w.eda, w.acc, True)
        m = assemble_matrix(w, PEA)
        r, c = np.meshgrid(np.arange(10), np.arange(32), indexing="ij")
        np.testing.assert_array_equal(m.cells[:10], (32 * r + c) / 319)

    def test_eda_repetition_layout(self):
        w = const_window()
        w = Window("S", 0, Label.STRESS, w.ppg, np.arange(20) / 19, w.acc, True)
        m = assemble_matrix(w, PEA)
        np.testing.assert_array_equal(m.cells[10:15].reshape(-1), np.repeat(np.arange(20) / 19, 8))

    def test_repeat_fill(self, rng):
        w = random_window(rng)
        m = assemble_matrix(w, PEA, BandLayout(fill="repeat"))
        np.testing.assert_array_equal(m.cells[20:32], m.cells[0:12])
        assert m.band_map[20:32] == m.band_map[0:12]
        assert FILL not in m.band_map

    def test_overflow(self):
        with pytest.raises(ValueError, match="overflow"):
            assemble_matrix(const_window(), PEA, BandLayout(repetition={"P": 2, "E": 8, "A": 2}))

    def test_not_row_aligned(self):
        with pytest.raises(ValueError, match="multiple"):
            assemble_matrix(const_window(), PEA, BandLayout(repetition={"P": 1, "E": 3, "A": 1}))

    def test_rejects_unnormalized(self):
        w = const_window(p=2.0)
        with pytest.raises(ValueError, match="normalized"):
            assemble_matrix(w, PEA)

    def test_cell_budget(self, rng):
        m = assemble_matrix(random_window(rng), Arrangement.from_name("AEP"))
        counts = {t: 32 * m.band_map.count(t) for t in ("P", "E", "A", FILL)}
        assert counts == {"P": 320, "E": 160, "A": 160, FILL: 384}
        assert sum(counts.values()) == 1024

    def test_deterministic(self, rng):
        w = random_window(rng)
        a = assemble_matrix(w, PEA)
        b = assemble_matrix(w, PEA)
        assert a.cells.tobytes() == b.cells.tobytes()

    def test_csv_dump_roundtrip(self, rng, tmp_path):
        m = assemble_matrix(random_window(rng), PEA)
        path = write_matrix_csv(m, tmp_path)
        assert path.name == "S1_3_PEA.csv"
        np.testing.assert_array_equal(read_matrix_csv(path), m.cells)
        assert len(path.read_text().splitlines()) == 32


class TestArrangements:
    def test_six_permutations(self):
        names = [a.name for a in enumerate_arrangements(["P", "E", "A"])]
        assert names == ["AEP", "APE", "EAP", "EPA", "PAE", "PEA"]

    def test_singleton(self):
        assert [a.name for a in enumerate_arrangements(["P"])] == ["P"]

    def test_duplicates(self):
        with pytest.raises(ValueError):
            enumerate_arrangements(["P", "P", "A"])

    def test_selector(self):
        assert [a.name for a in select_arrangements("PEA,EPA,EAP")] == ["PEA", "EPA", "EAP"]
        assert len(select_arrangements("all")) == 6

    @pytest.mark.parametrize("bad", ["PEX", "PE", "PPA", "PEA,PEA", ""])
    def test_bad_selector(self, bad):
        with pytest.raises(ValueError):
            select_arrangements(bad)
