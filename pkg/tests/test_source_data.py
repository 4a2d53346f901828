import numpy as np
import pytest

from icdm_fusion.source_data import (
    BinningConfig,
    DtMatrix,
    DtRecord,
    MmrReport,
    MmrsVector,
    align_common_neighbors,
    bin_cir,
    bin_cir_array,
    build_dt_matrix,
    build_mmrs_vector,
    cir,
)


class TestCir:
    @pytest.mark.parametrize("s,n,expected", [(-60, -60, 0.0), (-55, -70, 15.0), (-80, -60, -20.0)])
    def test_examples(self, s, n, expected):
        assert cir(s, n) == expected

    def test_float_dust_removed(self):
        # -71.3 - (-80.3) is 8.999999999999986 in raw floats
        assert cir(-71.3, -80.3) == 9.0


class TestBinning:
    def test_defaults(self, binning):
        assert binning.Q == 10
        assert binning.q_threshold == 6
        assert binning.cir_threshold == 9.0

    @pytest.mark.parametrize("value,q", [(-10, 1), (9.0, 7), (100, 10), (-6.0, 2), (8.999, 6), (18.0, 10)])
    def test_bin_examples(self, binning, value, q):
        assert bin_cir(value, binning) == q

    def test_hand_walk_of_all_edges(self, binning):
        # left edge of interval q+1 is edges[q-1]; each edge opens the next interval
        for q, edge in enumerate(binning.edges, start=2):
            assert bin_cir(edge, binning) == q
            assert bin_cir(np.nextafter(edge, -np.inf), binning) == q - 1

    def test_array_matches_scalar_and_nan_is_zero(self, binning):
        vals = np.array([-10.0, 0.0, np.nan, 9.0, 30.0])
        assert bin_cir_array(vals, binning).tolist() == [1, 4, 0, 7, 10]

    @pytest.mark.parametrize("edges,qt", [((3.0, 1.0), 1), ((), 1), ((0.0, 1.0), 3), ((0.0, 1.0), 0)])
    def test_invalid_config(self, edges, qt):
        with pytest.raises(ValueError):
            BinningConfig(edges, qt)


class TestMmrsVector:
    def test_figure_one_style_count(self, binning):
        # 100 reports, neighbor "3" always at CIR -4 dB -> interval 2
        reports = [MmrReport("S", -70.0, (("3", -66.0), ("1", -90.0))) for _ in range(100)]
        v = build_mmrs_vector(reports, binning)
        assert v.block("3")[1] == 100
        assert v.block("3").sum() == 100
        assert v.total_reports == 100

    def test_empty(self, binning):
        v = build_mmrs_vector([], binning, serving_id="S")
        assert v.J == 0 and v.counts.size == 0 and v.total_reports == 0

    def test_hand_tally(self, binning):
        reports = [
            MmrReport("S", -60, (("B", -70), ("A", -75))),  # B:10 -> q7, A:15 -> q9
            MmrReport("S", -70, (("A", -65),)),             # A:-5 -> q2
            MmrReport("S", -65, (("A", -68), ("B", -80))),  # A:3 -> q5, B:15 -> q9
            MmrReport("S", -62, ()),
            MmrReport("S", -60, (("B", -60),)),             # B:0 -> q4
        ]
        v = build_mmrs_vector(reports, binning)
        assert v.neighbor_ids == ("A", "B")
        expected = np.zeros((2, 10), dtype=int)
        expected[0, [8, 1, 4]] = 1
        expected[1, [6, 8, 3]] = 1
        np.testing.assert_array_equal(v.matrix(), expected)
        assert v.counts[0 * 10 + 9 - 1] == 1  # r_{A,9} at index (j-1)Q + q
        assert v.counts.sum() <= 6 * v.total_reports

    def test_mixed_serving_rejected(self, binning):
        with pytest.raises(ValueError, match="mix serving"):
            build_mmrs_vector([MmrReport("S", -60), MmrReport("T", -60)], binning)

    def test_report_limits(self):
        with pytest.raises(ValueError):
            MmrReport("S", -60, tuple((f"N{i}", -70) for i in range(7)))
        with pytest.raises(ValueError):
            MmrReport("S", -60, (("A", -70), ("A", -71)))

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            MmrsVector("S", ("A",), np.array([-1, 0]), 1, 2)


class TestDtMatrix:
    def test_single_record(self):
        dt = build_dt_matrix([DtRecord(0, 0, (("S", -60), ("A", -70)))], "S")
        assert dt.values.shape == (1, 1)
        assert dt.values[0, 0] == 10.0

    def test_hand_computation_four_by_three(self):
        recs = [
            DtRecord(0, 0, (("S", -60), ("A", -70), ("C", -66))),
            DtRecord(1, 0, (("S", -65), ("B", -62))),
            DtRecord(2, 0, (("S", -70), ("A", -70), ("B", -90), ("C", -71))),
            DtRecord(3, 0, (("S", -58),)),
        ]
        dt = build_dt_matrix(recs, "S")
        nan = np.nan
        expected = np.array([
            [10.0, nan, 0.0, nan],
            [nan, -3.0, 20.0, nan],
            [6.0, nan, 1.0, nan],
        ])
        assert dt.neighbor_ids == ("A", "B", "C")
        np.testing.assert_array_equal(dt.values, expected)
        assert dt.detected.sum() == 6

    def test_missing_serving(self):
        with pytest.raises(ValueError, match="record 1"):
            build_dt_matrix([DtRecord(0, 0, (("S", -60),)), DtRecord(0, 0, (("A", -60),))], "S")

    def test_no_records(self):
        with pytest.raises(ValueError):
            build_dt_matrix([], "S")

    def test_infinite_rejected(self):
        with pytest.raises(ValueError):
            DtMatrix("S", ("A",), np.array([[np.inf]]))


def _vec(ids, rows, total=10):
    return MmrsVector("S", ids, np.asarray(rows).reshape(-1), total, 2)


def _dt(ids, rows):
    return DtMatrix("S", ids, np.asarray(rows, dtype=float))


class TestAlign:
    def test_partial_overlap(self):
        m = _vec(("A", "B", "C"), [[1, 2], [3, 4], [5, 6]])
        d = _dt(("B", "C", "D"), [[1.0], [2.0], [3.0]])
        m2, d2, idx = align_common_neighbors(m, d)
        assert idx.n_common == 2
        assert idx.common_ids == ("B", "C")
        assert d2.neighbor_ids == ("B", "C", "D")
        assert m2.neighbor_ids == ("B", "C", "A")
        assert m2.block("A").tolist() == [1, 2]
        assert idx.dt_only_ids == ("D",)

    def test_identical_and_disjoint(self):
        m = _vec(("A", "B"), [[1, 2], [3, 4]])
        _, _, idx = align_common_neighbors(m, _dt(("B", "A"), [[1.0], [2.0]]))
        assert idx.n_common == 2 and idx.dt_only_ids == ()
        _, _, idx = align_common_neighbors(m, _dt(("X",), [[1.0]]))
        assert idx.n_common == 0

    def test_is_a_permutation(self, rng):
        ids = tuple(f"N{i}" for i in range(8))
        m = MmrsVector("S", ids[:6], rng.integers(0, 9, 60), 50, 10)
        vals = rng.normal(5, 5, (6, 7))
        vals[rng.random(vals.shape) < 0.3] = np.nan
        d = DtMatrix("S", ids[2:], vals)
        m2, d2, idx = align_common_neighbors(m, d)
        assert sorted(m2.counts.tolist()) == sorted(m.counts.tolist())
        for cid in d.neighbor_ids:
            np.testing.assert_array_equal(d2.values[d2.neighbor_ids.index(cid)],
                                          d.values[d.neighbor_ids.index(cid)])
        assert m2.neighbor_ids[:idx.n_common] == d2.neighbor_ids[:idx.n_common]
