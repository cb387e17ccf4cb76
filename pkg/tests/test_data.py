"""Tests for parsing, labelling, normalisation, windowing and splitting."""

import numpy as np
import numpy.testing as npt
import pytest

from ginet import data as D
from ginet.errors import DataError, InsufficientCyclesError, ParseError
from ginet.synthetic import generate_cycles


def write_csv(path, rows, header=D.REQUIRED_COLUMNS):
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def toy_cycle(length, soc=None, cycle_id="c0"):
    ts = np.arange(length, dtype=np.float64)
    return D.Cycle(cycle_id, 25.0, "UDDS", ts,
                   current=-np.ones(length),
                   voltage=np.linspace(4.0, 3.0, length),
                   temperature=np.full(length, 25.0),
                   amp_hours=-ts / 3600.0,
                   soc=np.linspace(1.0, 0.0, length) if soc is None else soc)


class TestParse:
    def test_three_rows_matching_slots(self, tmp_path):
        f = tmp_path / "c.csv"
        write_csv(f, [[t, 3.7, -1.0, 25.0, -0.1 * t] for t in range(3)])
        cycle = D.parse_cycle_csv(f, slot_seconds=1.0)
        assert len(cycle) == 3
        npt.assert_allclose(cycle.timestamps, [0.0, 1.0, 2.0])

    def test_missing_voltage_column(self, tmp_path):
        f = tmp_path / "c.csv"
        header = [c for c in D.REQUIRED_COLUMNS if c != "voltage_V"]
        write_csv(f, [[0.0, -1.0, 25.0, 0.0]], header=header)
        with pytest.raises(ParseError, match="voltage_V"):
            D.parse_cycle_csv(f)

    def test_ten_hz_aggregation(self, tmp_path):
        # 20 rows at 10 Hz -> 2 slots, each the arithmetic mean of 10 rows
        f = tmp_path / "c.csv"
        rows = [[k / 10.0, 3.0 + k, -1.0 - k, 20.0, -0.001 * k] for k in range(20)]
        write_csv(f, rows)
        cycle = D.parse_cycle_csv(f, slot_seconds=1.0)
        assert len(cycle) == 2
        npt.assert_allclose(cycle.voltage, [3.0 + np.mean(range(10)),
                                            3.0 + np.mean(range(10, 20))])
        npt.assert_allclose(cycle.current, [-1.0 - np.mean(range(10)),
                                            -1.0 - np.mean(range(10, 20))])

    def test_non_monotonic_timestamps(self, tmp_path):
        f = tmp_path / "c.csv"
        write_csv(f, [[0.0, 3.7, -1.0, 25.0, 0.0],
                      [1.0, 3.7, -1.0, 25.0, 0.0],
                      [0.5, 3.7, -1.0, 25.0, 0.0]])
        with pytest.raises(DataError, match="increasing"):
            D.parse_cycle_csv(f)

    def test_directory_parse_sorted(self, tmp_path):
        for name in ("b.csv", "a.csv"):
            write_csv(tmp_path / name, [[t, 3.7, -1.0, 25.0, 0.0] for t in range(3)])
        cycles = D.parse_dataset(tmp_path)
        assert [c.id for c in cycles] == ["a", "b"]

    def test_empty_directory(self, tmp_path):
        with pytest.raises(DataError, match="no cycle CSV"):
            D.parse_dataset(tmp_path)

    def test_roundtrip_through_csv(self, tmp_path):
        cycle = generate_cycles(1, 50, seed=3)[0]
        f = tmp_path / f"{cycle.id}.csv"
        D.write_cycle_csv(cycle, f)
        back = D.parse_cycle_csv(f, slot_seconds=1.0)
        npt.assert_allclose(back.current, cycle.current)
        npt.assert_allclose(back.amp_hours, cycle.amp_hours)
        assert back.ambient_temperature == cycle.ambient_temperature


class TestDeriveSoc:
    def test_full_charge_anchor(self):
        c = toy_cycle(3)
        c.amp_hours = np.zeros(3)
        assert np.all(D.derive_soc(c, 2.9).soc == 1.0)

    def test_midpoint(self):
        c = toy_cycle(1)
        c.amp_hours = np.array([-1.45])
        npt.assert_allclose(D.derive_soc(c, 2.9).soc, [0.5])

    def test_clamped(self):
        c = toy_cycle(1)
        c.amp_hours = np.array([-3.5])
        npt.assert_allclose(D.derive_soc(c, 2.9).soc, [0.0])


class TestNormalize:
    def test_basic_scaling(self):
        c = toy_cycle(3)
        c.current = np.array([2.0, 4.0, 6.0])
        stats = D.fit_normalize([c])
        out = D.apply_normalize(stats, [c])[0]
        npt.assert_allclose(out.current, [0.0, 0.5, 1.0])

    def test_degenerate_range_maps_to_zero(self):
        c = toy_cycle(3)
        c.current = np.full(3, 5.0)
        out = D.apply_normalize(D.fit_normalize([c]), [c])[0]
        npt.assert_allclose(out.current, 0.0)

    def test_test_data_may_exceed_unit_range(self):
        train = toy_cycle(3, cycle_id="train")
        train.current = np.array([2.0, 4.0, 6.0])
        stats = D.fit_normalize([train])
        test = toy_cycle(1, cycle_id="test")
        test.current = np.array([8.0])
        out = D.apply_normalize(stats, [test])[0]
        npt.assert_allclose(out.current, [1.5])

    def test_train_features_land_in_unit_interval(self):
        cycles = generate_cycles(4, 80, seed=1)
        stats = D.fit_normalize(cycles)
        for c in D.apply_normalize(stats, cycles):
            feats = c.features()
            assert feats.min() >= -1e-12 and feats.max() <= 1 + 1e-12

    def test_soc_untouched(self):
        cycles = generate_cycles(2, 60, seed=2)
        normed = D.apply_normalize(D.fit_normalize(cycles), cycles)
        for raw, out in zip(cycles, normed):
            npt.assert_array_equal(raw.soc, out.soc)


class TestWindows:
    def test_counting(self):
        wins = D.make_windows(toy_cycle(5), t_in=2, t_out=1)
        assert len(wins) == 3

    def test_too_short_warns_and_returns_empty(self):
        with pytest.warns(UserWarning, match="no windows"):
            assert D.make_windows(toy_cycle(19), t_in=10, t_out=10) == []

    def test_alignment(self):
        c = toy_cycle(6, soc=np.arange(6, dtype=np.float64))
        first = D.make_windows(c, t_in=2, t_out=2)[0]
        assert first.t_origin == 2
        npt.assert_array_equal(first.input, c.features()[0:2])
        npt.assert_array_equal(first.target, [2.0, 3.0])

    def test_input_and_target_ranges_disjoint_and_contiguous(self):
        for win in D.make_windows(toy_cycle(30), t_in=7, t_out=4, stride=3):
            in_slots = range(win.t_origin - 7, win.t_origin)
            out_slots = range(win.t_origin, win.t_origin + 4)
            assert set(in_slots).isdisjoint(out_slots)
            assert max(in_slots) + 1 == min(out_slots)

    def test_count_formula_matches_enumeration(self):
        # brute-force count of valid placements vs the closed formula
        for length in range(1, 21):
            for t_in in range(1, 9):
                for t_out in range(1, 9):
                    for stride in (1, 2, 3):
                        expected = len([t for t in range(t_in, length - t_out + 1)
                                        if (t - t_in) % stride == 0])
                        if length < t_in + t_out:
                            with pytest.warns(UserWarning):
                                got = len(D.make_windows(toy_cycle(length), t_in,
                                                         t_out, stride))
                        else:
                            got = len(D.make_windows(toy_cycle(length), t_in,
                                                     t_out, stride))
                            formula = (length - t_in - t_out) // stride + 1
                            assert got == formula
                        assert got == expected


class TestSplit:
    def test_paper_ratio(self):
        cycles = generate_cycles(17, 30, seed=0)
        train, val, test = D.split_cycles(cycles, (10, 2, 5), seed=0)
        assert (len(train), len(val), len(test)) == (10, 2, 5)

    def test_deterministic(self):
        cycles = generate_cycles(17, 30, seed=0)
        a = D.split_cycles(cycles, seed=7)
        b = D.split_cycles(cycles, seed=7)
        assert [[c.id for c in part] for part in a] == \
               [[c.id for c in part] for part in b]

    def test_proportional_rounding(self):
        cycles = generate_cycles(34, 30, seed=0)
        train, val, test = D.split_cycles(cycles, (10, 2, 5), seed=0)
        assert (len(train), len(val), len(test)) == (20, 4, 10)

    def test_disjoint_and_complete(self):
        cycles = generate_cycles(23, 30, seed=0)
        parts = D.split_cycles(cycles, seed=1)
        ids = [c.id for part in parts for c in part]
        assert len(ids) == len(set(ids)) == 23

    def test_too_few_cycles(self):
        with pytest.raises(InsufficientCyclesError):
            D.split_cycles(generate_cycles(2, 30, seed=0))

    def test_every_part_nonempty_for_small_counts(self):
        for n in (3, 4, 5, 6):
            parts = D.split_cycles(generate_cycles(n, 30, seed=0), seed=0)
            assert all(len(p) >= 1 for p in parts)


class TestPreparedDataset:
    def make(self, tmp_path, seed=0):
        cycles = generate_cycles(6, 60, seed=4)
        ds = D.build_prepared_dataset(cycles, t_in=8, t_out=3, slot_seconds=1.0,
                                      stride=2, ratio=(10, 2, 5), seed=seed,
                                      provenance={"source": "synthetic"},
                                      config_digest=D.config_digest({"seed": seed}))
        path = tmp_path / f"ds_{seed}.bin"
        D.save_dataset(ds, path)
        return ds, path

    def test_roundtrip(self, tmp_path):
        ds, path = self.make(tmp_path)
        loaded = D.load_dataset(path)
        assert loaded.t_in == 8 and loaded.t_out == 3
        for name in ds.arrays:
            npt.assert_array_equal(loaded.arrays[name], ds.arrays[name])
        npt.assert_array_equal(loaded.norm_stats.minimum, ds.norm_stats.minimum)
        assert loaded.split_cycle_ids == ds.split_cycle_ids

    def test_byte_identical_across_runs(self, tmp_path):
        _, path_a = self.make(tmp_path, seed=0)
        ds, _ = self.make(tmp_path, seed=0)
        path_b = tmp_path / "again.bin"
        D.save_dataset(ds, path_b)
        assert path_a.read_bytes() == path_b.read_bytes()

    def test_no_cycle_leakage(self, tmp_path):
        ds, _ = self.make(tmp_path)
        train_ids = set(ds.split_cycle_ids["train"])
        test_ids = set(ds.split_cycle_ids["test"])
        assert train_ids.isdisjoint(test_ids)
        # per-window bookkeeping points back into the right split only
        for split in D.SPLIT_NAMES:
            idx = ds.arrays[f"{split}_cycle"]
            assert np.all(idx < len(ds.split_cycle_ids[split]))

    def test_targets_are_raw_soc(self, tmp_path):
        ds, _ = self.make(tmp_path)
        y = ds.arrays["train_y"]
        assert y.min() >= 0.0 and y.max() <= 1.0


class TestSynthetic:
    def test_deterministic(self):
        a = generate_cycles(3, 40, seed=9)
        b = generate_cycles(3, 40, seed=9)
        for ca, cb in zip(a, b):
            npt.assert_array_equal(ca.voltage, cb.voltage)

    def test_discharge_is_monotone_and_in_range(self):
        for c in generate_cycles(5, 100, seed=11):
            assert np.all(np.diff(c.soc) <= 1e-12)
            assert c.soc[0] == 1.0 and 0.0 <= c.soc[-1] <= 0.3
