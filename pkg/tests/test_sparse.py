"""Graph containers, conversions, loaders, tensors, and the SBM generator."""
from __future__ import annotations

import numpy as np
import pytest

from halfsparse import sparse as sp

# ── COO / CSR containers ────────────────────────────────────────────────


def _toy_graph():
    # 4 vertices, degrees (3, 1, 2, 4); hand-sorted row-major.
    rows = np.array([0, 0, 0, 1, 2, 2, 3, 3, 3, 3])
    cols = np.array([1, 2, 3, 0, 0, 3, 0, 1, 2, 3])
    return sp.CooGraph(4, rows, cols)


class TestCoo:
    def test_accepts_sorted_unique(self):
        g = _toy_graph()
        assert g.num_edges == 10

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError, match="sorted"):
            sp.CooGraph(3, np.array([1, 0]), np.array([0, 1]))

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            sp.CooGraph(3, np.array([0, 0]), np.array([1, 1]))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            sp.CooGraph(2, np.array([0]), np.array([5]))

    def test_from_edges_sorts_and_dedups(self):
        g = sp.CooGraph.from_edges(
            3, np.array([2, 0, 2, 0]), np.array([1, 2, 1, 2])
        )
        assert g.num_edges == 2
        assert g.rows.tolist() == [0, 2]

    def test_degree_sum_equals_edges(self):
        g = _toy_graph()
        deg = np.bincount(g.rows, minlength=g.n)
        assert int(deg.sum()) == g.num_edges


class TestCsr:
    def test_offsets_hand_counted(self):
        csr = sp.coo_to_csr(_toy_graph())
        assert csr.offsets.tolist() == [0, 3, 4, 6, 10]
        assert csr.degrees.tolist() == [3, 1, 2, 4]

    def test_round_trip_identity(self):
        g = _toy_graph()
        back = sp.csr_to_coo(sp.coo_to_csr(g))
        np.testing.assert_array_equal(back.rows, g.rows)
        np.testing.assert_array_equal(back.cols, g.cols)

    def test_round_trip_random(self):
        rng = np.random.default_rng(3)
        mask = rng.random((20, 20)) < 0.2
        rows, cols = np.nonzero(mask)
        g = sp.CooGraph.from_edges(20, rows, cols)
        back = sp.csr_to_coo(sp.coo_to_csr(g))
        np.testing.assert_array_equal(back.rows, g.rows)
        np.testing.assert_array_equal(back.cols, g.cols)


class TestTranspose:
    def test_reverses_pairs_and_preserves_count(self):
        g = _toy_graph()
        gt = sp.transpose(g)
        assert gt.num_edges == g.num_edges
        fwd = set(zip(g.rows.tolist(), g.cols.tolist()))
        rev = set(zip(gt.cols.tolist(), gt.rows.tolist()))
        assert fwd == rev

    def test_double_transpose_identity(self):
        g = _toy_graph()
        gtt = sp.transpose(sp.transpose(g))
        np.testing.assert_array_equal(gtt.rows, g.rows)
        np.testing.assert_array_equal(gtt.cols, g.cols)

    def test_perm_reorders_edge_weights(self):
        g = _toy_graph()
        gt, perm = sp.transpose(g, return_perm=True)
        w = np.arange(g.num_edges, dtype=np.float64)
        wt = w[perm]
        # weight of transposed edge (r,c) equals weight of original (c,r)
        lookup = {(r, c): v for r, c, v in zip(g.rows, g.cols, w)}
        for r, c, v in zip(gt.rows, gt.cols, wt):
            assert lookup[(int(c), int(r))] == v

    def test_col_degrees_match_transpose_rows(self):
        g = _toy_graph()
        gt = sp.transpose(g)
        np.testing.assert_array_equal(
            sp.col_degrees(g), np.bincount(gt.rows, minlength=g.n)
        )


class TestSelfLoopsAndSymmetrize:
    def test_add_self_loops(self):
        g = sp.CooGraph(2, np.array([0]), np.array([1]))
        g2 = sp.add_self_loops(g)
        assert g2.num_edges == 3
        pairs = set(zip(g2.rows.tolist(), g2.cols.tolist()))
        assert (0, 0) in pairs and (1, 1) in pairs

    def test_add_self_loops_idempotent_on_existing(self):
        g = sp.CooGraph(2, np.array([0, 0]), np.array([0, 1]))
        assert sp.add_self_loops(g).num_edges == 3

    def test_symmetrize(self):
        g = sp.CooGraph(3, np.array([0]), np.array([2]))
        g2 = sp.symmetrize(g)
        pairs = set(zip(g2.rows.tolist(), g2.cols.tolist()))
        assert pairs == {(0, 2), (2, 0)}


# ── Edge-list loader ────────────────────────────────────────────────────


class TestLoader:
    def test_loads_with_comments(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("# a comment\n0 1\n% another\n1 2\n\n2 0\n")
        g = sp.load_edge_list(p)
        assert g.n == 3 and g.num_edges == 3

    def test_bad_line_reports_number(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0 1\nnot an edge\n")
        with pytest.raises(ValueError, match=":2:"):
            sp.load_edge_list(p)

    def test_short_line_reports_number(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0\n")
        with pytest.raises(ValueError, match=":1:"):
            sp.load_edge_list(p)

    def test_explicit_vertex_count(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0 1\n")
        assert sp.load_edge_list(p, num_vertices=10).n == 10

    def test_symmetrize_flag(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0 1\n")
        g = sp.load_edge_list(p, symmetrize_edges=True)
        assert g.num_edges == 2

    def test_missing_file_oserror(self, tmp_path):
        with pytest.raises(OSError):
            sp.load_edge_list(tmp_path / "absent.txt")


# ── Dense tensors ───────────────────────────────────────────────────────


class TestDenseTensor:
    def test_modes(self):
        t = sp.DenseTensor(np.zeros((2, 4), dtype=np.float16))
        assert t.mode == "half"
        t = sp.DenseTensor(np.zeros((2, 4), dtype=np.float32))
        assert t.mode == "float32"

    def test_rejects_other_dtypes(self):
        with pytest.raises(ValueError):
            sp.DenseTensor(np.zeros((2, 2), dtype=np.float64))

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            sp.DenseTensor(np.zeros(4, dtype=np.float16))

    @pytest.mark.parametrize("multiple, want", [(2, 6), (4, 8), (8, 8)])
    def test_pad_features(self, multiple, want):
        t = sp.DenseTensor(np.ones((3, 6), dtype=np.float16))
        p = sp.pad_features(t, multiple)
        assert p.cols == want
        np.testing.assert_array_equal(p.data[:, :6], t.data)
        assert not p.data[:, 6:].any()

    def test_pad_noop_when_aligned(self):
        t = sp.DenseTensor(np.ones((3, 8), dtype=np.float16))
        assert sp.pad_features(t, 4).cols == 8

    def test_serialization_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        for dtype in (np.float16, np.float32):
            t = sp.DenseTensor(rng.normal(size=(5, 3)).astype(dtype))
            path = tmp_path / f"t_{dtype.__name__}.bin"
            sp.save_tensor(t, path)
            back = sp.load_tensor(path)
            assert back.mode == t.mode
            np.testing.assert_array_equal(
                back.data.view(np.uint8), t.data.view(np.uint8)
            )

    def test_header_is_16_bytes(self, tmp_path):
        t = sp.DenseTensor(np.zeros((2, 3), dtype=np.float16))
        path = tmp_path / "t.bin"
        sp.save_tensor(t, path)
        assert path.stat().st_size == 16 + 2 * 3 * 2

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(ValueError, match="tensor file"):
            sp.load_tensor(path)

    def test_truncated_payload_rejected(self, tmp_path):
        t = sp.DenseTensor(np.zeros((4, 4), dtype=np.float16))
        path = tmp_path / "t.bin"
        sp.save_tensor(t, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ValueError):
            sp.load_tensor(path)


# ── Synthetic SBM ───────────────────────────────────────────────────────


class TestSynthSbm:
    def test_two_cliques(self):
        g, x, labels = sp.synth_sbm(8, 2, 1.0, 0.0, 2, seed=7)
        assert labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]
        # complete blocks without self loops, both directions
        assert g.num_edges == 2 * (4 * 3 // 2) * 2
        for r, c in zip(g.rows, g.cols):
            assert labels[r] == labels[c]

    def test_empty_when_p_zero(self):
        g, _, _ = sp.synth_sbm(10, 2, 0.0, 0.0, 4, seed=0)
        assert g.num_edges == 0

    def test_deterministic(self):
        a = sp.synth_sbm(30, 2, 0.3, 0.05, 4, seed=11)
        b = sp.synth_sbm(30, 2, 0.3, 0.05, 4, seed=11)
        np.testing.assert_array_equal(a[0].rows, b[0].rows)
        np.testing.assert_array_equal(a[0].cols, b[0].cols)
        np.testing.assert_array_equal(a[1].data, b[1].data)
        np.testing.assert_array_equal(a[2], b[2])

    def test_validates_probabilities(self):
        with pytest.raises(ValueError):
            sp.synth_sbm(10, 2, 0.5, 0.9, 4, seed=0)
        with pytest.raises(ValueError):
            sp.synth_sbm(10, 2, 1.5, 0.1, 4, seed=0)

    def test_feature_shapes(self):
        g, x, labels = sp.synth_sbm(40, 4, 0.4, 0.1, 6, seed=2)
        assert x.data.shape == (40, 6)
        assert x.mode == "float32"
        assert labels.shape == (40,)
