"""Graph containers, dense tensors, loaders, and the synthetic SBM generator.

Graphs are directed edge sets. COO storage is canonical: edges sorted by
(row, col), duplicates removed at construction, so row ids are non-decreasing
and a CSR view is a prefix-sum away. Self loops are kept as-is; symmetrize
only on request.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .halfnum import to_half

_TENSOR_MAGIC = b"HSDT"
_MODE_CODES = {"half": 1, "float32": 2}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}
_MODE_DTYPES = {"half": np.float16, "float32": np.float32}


# ── COO / CSR ───────────────────────────────────────────────────────────


@dataclass(frozen=True)
class CooGraph:
    """Sorted, deduplicated COO edge set over vertices [0, n)."""

    n: int
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise ValueError("rows/cols must be matching 1-D arrays")
        if self.n <= 0:
            raise ValueError("vertex count must be positive")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n:
                raise ValueError("row vertex id out of range")
            if cols.min() < 0 or cols.max() >= self.n:
                raise ValueError("col vertex id out of range")
            keys = rows * self.n + cols
            if np.any(np.diff(keys) <= 0):
                raise ValueError("edges must be sorted by (row, col) without duplicates")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @property
    def num_edges(self):
        return int(self.rows.size)

    @classmethod
    def from_edges(cls, n, rows, cols):
        """Build a canonical graph from an unsorted edge list (dedups)."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size:
            if rows.min() < 0 or cols.min() < 0:
                raise ValueError("negative vertex id")
            if max(rows.max(), cols.max()) >= n:
                raise ValueError("vertex id out of range")
            keys = rows * np.int64(n) + cols
            keys = np.unique(keys)
            rows, cols = keys // n, keys % n
        return cls(n, rows, cols)


@dataclass(frozen=True)
class CsrGraph:
    """Row-compressed view: offsets, column ids, and row degrees."""

    n: int
    offsets: np.ndarray
    cols: np.ndarray
    degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        if offsets.size != self.n + 1 or offsets[0] != 0 or offsets[-1] != cols.size:
            raise ValueError("offsets must span [0, num_edges] with n+1 entries")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("offsets must be non-decreasing")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "degrees", np.diff(offsets))

    @property
    def num_edges(self):
        return int(self.cols.size)


def coo_to_csr(g: CooGraph) -> CsrGraph:
    counts = np.bincount(g.rows, minlength=g.n)
    offsets = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return CsrGraph(g.n, offsets, g.cols.copy())


def csr_to_coo(c: CsrGraph) -> CooGraph:
    rows = np.repeat(np.arange(c.n, dtype=np.int64), c.degrees)
    return CooGraph(c.n, rows, c.cols.copy())


def transpose(g: CooGraph, return_perm: bool = False):
    """Reverse every edge. With return_perm, also map new edge -> old index.

    The permutation lets per-edge values ride along: w_t = w[perm] carries the
    original edge ordering into the transposed ordering.
    """
    keys = g.cols * np.int64(g.n) + g.rows
    perm = np.argsort(keys, kind="stable")
    gt = CooGraph(g.n, g.cols[perm], g.rows[perm])
    if return_perm:
        return gt, perm
    return gt


def col_degrees(g: CooGraph) -> np.ndarray:
    """Appearance count of each vertex on the column side."""
    return np.bincount(g.cols, minlength=g.n).astype(np.int64)


def add_self_loops(g: CooGraph) -> CooGraph:
    """Union of the edge set with (v, v) for every vertex."""
    v = np.arange(g.n, dtype=np.int64)
    return CooGraph.from_edges(
        g.n, np.concatenate([g.rows, v]), np.concatenate([g.cols, v])
    )


def symmetrize(g: CooGraph) -> CooGraph:
    """Union of the edge set with its transpose."""
    return CooGraph.from_edges(
        g.n, np.concatenate([g.rows, g.cols]), np.concatenate([g.cols, g.rows])
    )


def load_edge_list(path, num_vertices=None, symmetrize_edges=False) -> CooGraph:
    """Parse a whitespace "src dst" text file; '#'/'%' lines are comments.

    Vertex count defaults to max id + 1. Malformed lines and out-of-range ids
    raise with the offending line number.
    """
    rows, cols = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text[0] in "#%":
                continue
            parts = text.split()
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'src dst'")
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer vertex id") from exc
            if src < 0 or dst < 0:
                raise ValueError(f"{path}:{lineno}: negative vertex id")
            rows.append(src)
            cols.append(dst)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    n = int(num_vertices) if num_vertices is not None else int(
        max(rows.max(initial=-1), cols.max(initial=-1)) + 1
    )
    if n <= 0:
        raise ValueError(f"{path}: empty graph and no vertex count given")
    if rows.size and max(rows.max(), cols.max()) >= n:
        bad = np.argmax((rows >= n) | (cols >= n))
        raise ValueError(f"{path}: vertex id out of range at edge {bad}")
    g = CooGraph.from_edges(n, rows, cols)
    return symmetrize(g) if symmetrize_edges else g


# ── Dense tensors ───────────────────────────────────────────────────────


@dataclass(frozen=True)
class DenseTensor:
    """Row-major 2-D tensor in one of two precision modes: half | float32."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data)
        if data.ndim != 2:
            raise ValueError("tensor must be 2-D")
        if data.dtype not in (np.float16, np.float32):
            raise ValueError(f"unsupported dtype {data.dtype}")
        object.__setattr__(self, "data", data)

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def mode(self):
        return "half" if self.data.dtype == np.float16 else "float32"

    @classmethod
    def from_array(cls, arr, mode):
        if mode == "half":
            return cls(to_half(arr))
        with np.errstate(over="ignore"):
            return cls(np.asarray(arr).astype(_MODE_DTYPES[mode]))

    @classmethod
    def zeros(cls, rows, cols, mode):
        return cls(np.zeros((rows, cols), dtype=_MODE_DTYPES[mode]))

    def astype(self, mode):
        return DenseTensor.from_array(self.data, mode)


def pad_features(t: DenseTensor, multiple: int) -> DenseTensor:
    """Zero-pad the feature axis up to the next multiple of 2, 4, or 8.

    Existing columns are untouched; a tensor already aligned is returned
    as-is.
    """
    if multiple not in (2, 4, 8):
        raise ValueError("padding multiple must be 2, 4, or 8")
    extra = (-t.cols) % multiple
    if extra == 0:
        return t
    pad = np.zeros((t.rows, extra), dtype=t.data.dtype)
    return DenseTensor(np.concatenate([t.data, pad], axis=1))


def save_tensor(t: DenseTensor, path):
    """16-byte header (magic, rows, cols, mode) + little-endian raw data."""
    header = _TENSOR_MAGIC + struct.pack(
        "<IIHxx", t.rows, t.cols, _MODE_CODES[t.mode]
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(t.data).astype(t.data.dtype.newbyteorder("<")).tobytes())


def load_tensor(path) -> DenseTensor:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != _TENSOR_MAGIC:
            raise ValueError(f"{path}: not a tensor file")
        rows, cols, code = struct.unpack("<IIHxx", header[4:])
        if code not in _CODE_MODES:
            raise ValueError(f"{path}: unknown mode code {code}")
        dtype = np.dtype(_MODE_DTYPES[_CODE_MODES[code]]).newbyteorder("<")
        raw = fh.read()
    expect = rows * cols * dtype.itemsize
    if len(raw) != expect:
        raise ValueError(f"{path}: payload is {len(raw)} bytes, expected {expect}")
    data = np.frombuffer(raw, dtype=dtype).reshape(rows, cols)
    return DenseTensor(data.astype(dtype.newbyteorder("=")))


# ── Synthetic data ──────────────────────────────────────────────────────


def synth_sbm(n, classes, p_in, p_out, feat_dim, seed):
    """Stochastic block model with class-separated Gaussian features.

    Returns (graph, features, labels). Edges are undirected (both directions
    emitted, no self loops); labels are contiguous blocks; features are a
    per-class mean plus unit noise so a small GNN can separate the classes.
    Deterministic for a given seed.
    """
    if classes < 1 or n < classes:
        raise ValueError("need at least one vertex per class")
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ValueError("need 0 <= p_out <= p_in <= 1")
    rng = np.random.default_rng(seed)
    labels = (np.arange(n, dtype=np.int64) * classes) // n

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    p = np.where(same, p_in, p_out)
    keep = rng.random(iu.size) < p
    src, dst = iu[keep], ju[keep]
    g = CooGraph.from_edges(
        n, np.concatenate([src, dst]), np.concatenate([dst, src])
    )

    means = rng.normal(0.0, 1.0, size=(classes, feat_dim))
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    means = means / np.where(norms == 0, 1.0, norms) * 4.0
    feats = means[labels] + rng.normal(0.0, 1.0, size=(n, feat_dim))
    x = DenseTensor.from_array(feats, "float32")
    return g, x, labels
