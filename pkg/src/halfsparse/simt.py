"""Warp/CTA scheduling and the deterministic cost model.

No GPU is involved anywhere: kernels run on the host and report exact counts
(transactions, bytes, reduction rounds, conflict writes) from the schedule
and graph alone. Counting conventions:

* A warp load of N half values at width w issues ceil(N / (32 * lanes(w)))
  transactions; every transaction counts the full 64 * lanes(w) bytes even
  when partially filled.
* Non-zero-element (row, col) loads move 8 bytes per edge, 32 edges per
  transaction (256 bytes); CSR column loads move 4 bytes per edge (128).
* barrier_waits counts one shared-memory publish/consume boundary per warp
  (or per neighbor group).
* shuffle_rounds counts per-edge intra-warp reduction rounds (SDDMM).
* intra_cta_rounds counts executed merge-tree levels when a row's partials
  span warps inside a CTA.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .halfnum import WIDTH_LANES
from .sparse import CooGraph, CsrGraph

EDGE_PARALLEL_MIN_CHUNK = 64
DEFAULT_WARP_CHUNK = 128
DEFAULT_WARPS_PER_CTA = 4
WARP_SIZE = 32
VERTEX_GROUP_SIZE = 32

_NZE_BYTES_COO = 8  # packed (row, col) pair
_NZE_BYTES_CSR = 4  # column id


def warp_load_bytes(width: str) -> int:
    """Bytes a full warp moves in one coalesced load at the given width."""
    if width not in WIDTH_LANES:
        raise ValueError(f"unknown width {width!r}")
    return WARP_SIZE * 2 * WIDTH_LANES[width]


def feature_transactions(n_values: int, width: str) -> int:
    """Transactions to load n_values halfs at a width (partials count full)."""
    per = WARP_SIZE * WIDTH_LANES[width]
    return -(-n_values // per) if n_values else 0


def sddmm_reduction_rounds(feature_len: int, width: str) -> int:
    """Inter-thread rounds to reduce one edge's dot product.

    feature_len/lanes threads each hold a partial; adjacent pairs merge per
    round, so log2 of the thread count for power-of-two shapes.
    """
    lanes = WIDTH_LANES.get(width)
    if lanes is None:
        raise ValueError(f"unknown width {width!r}")
    if feature_len <= 0 or feature_len % lanes:
        raise ValueError(
            f"feature length {feature_len} not divisible by {width} lanes ({lanes})"
        )
    threads = feature_len // lanes
    return max(0, (threads - 1).bit_length())


def intra_cta_rounds(subwarp_count: int) -> int:
    """Merge-tree rounds to combine one partial per sub-warp inside a CTA."""
    if subwarp_count <= 0 or subwarp_count & (subwarp_count - 1):
        raise ValueError(f"sub-warp count must be a power of two, got {subwarp_count}")
    return int(math.log2(subwarp_count))


@dataclass(frozen=True)
class SubWarpLayout:
    """How a warp splits across edges for a given feature length."""

    feature_len: int
    threads_per_edge: int
    subwarps: int  # edges processed per warp iteration
    feature_chunk: int  # features covered per iteration of one edge


def subwarp_layout(feature_len: int) -> SubWarpLayout:
    """Sub-warp split for feature lengths that fit a warp, chunking beyond 64.

    Each thread covers one half2 word, so F/2 threads serve an edge and
    32/(F/2) edges run per iteration. Past 64 features the whole warp serves
    one edge and iterates 64-feature chunks.
    """
    if feature_len <= 0 or feature_len % 2:
        raise ValueError(f"feature length must be even and positive, got {feature_len}")
    if feature_len > 2 * WARP_SIZE:
        return SubWarpLayout(feature_len, WARP_SIZE, 1, 2 * WARP_SIZE)
    threads = feature_len // 2
    return SubWarpLayout(feature_len, threads, WARP_SIZE // threads, feature_len)


@dataclass
class KernelMetrics:
    """Exact counts reported by every kernel run."""

    load_transactions: int = 0
    load_bytes: int = 0
    coalesced_bytes_per_warp_load: int = 0
    barrier_waits: int = 0
    shuffle_rounds: int = 0
    intra_cta_rounds: int = 0
    atomic_writes: int = 0
    staging_writes: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def as_dict(self) -> dict:
        return asdict(self)


# ── Schedules ───────────────────────────────────────────────────────────


@dataclass
class Schedule:
    """Ownership plan mapping edges (or neighbor groups) to warps and CTAs.

    edge_parallel: warp w owns the contiguous edge range
    [starts[w], ends[w]); CTA c owns warps [c*warps_per_cta, ...).
    vertex_grouped: warp w owns CSR slots [starts[w], ends[w]) of row
    group_rows[w]; groups of one row are consecutive warps.
    """

    kind: str
    warp_chunk: int
    warps_per_cta: int
    starts: np.ndarray
    ends: np.ndarray
    group_rows: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_warps(self):
        return int(self.starts.size)

    @property
    def num_ctas(self):
        return -(-self.num_warps // self.warps_per_cta) if self.num_warps else 0

    def cta_of(self, warp):
        return warp // self.warps_per_cta

    def warp_range(self, cta):
        lo = cta * self.warps_per_cta
        return lo, min(lo + self.warps_per_cta, self.num_warps)


def plan_edge_parallel(
    g: CooGraph,
    warp_chunk: int = DEFAULT_WARP_CHUNK,
    warps_per_cta: int = DEFAULT_WARPS_PER_CTA,
) -> Schedule:
    """Partition [0, |E|) into contiguous per-warp chunks.

    warp_chunk must be at least 64 and a multiple of 2; only the final warp
    may own a short range.
    """
    if warp_chunk < EDGE_PARALLEL_MIN_CHUNK or warp_chunk % 2:
        raise ValueError(
            f"warp_chunk must be >= {EDGE_PARALLEL_MIN_CHUNK} and even, got {warp_chunk}"
        )
    if warps_per_cta < 1:
        raise ValueError("warps_per_cta must be positive")
    e = g.num_edges
    n_warps = -(-e // warp_chunk) if e else 0
    starts = np.arange(n_warps, dtype=np.int64) * warp_chunk
    ends = np.minimum(starts + warp_chunk, e)
    return Schedule("edge_parallel", warp_chunk, warps_per_cta, starts, ends)


def plan_vertex_grouped(
    csr: CsrGraph, warps_per_cta: int = DEFAULT_WARPS_PER_CTA
) -> Schedule:
    """One warp per <=32-edge neighbor group; only a row's last group is short."""
    if warps_per_cta < 1:
        raise ValueError("warps_per_cta must be positive")
    starts, ends, rows = [], [], []
    for v in range(csr.n):
        lo, hi = int(csr.offsets[v]), int(csr.offsets[v + 1])
        for s in range(lo, hi, VERTEX_GROUP_SIZE):
            starts.append(s)
            ends.append(min(s + VERTEX_GROUP_SIZE, hi))
            rows.append(v)
    return Schedule(
        "vertex_grouped",
        VERTEX_GROUP_SIZE,
        warps_per_cta,
        np.asarray(starts, dtype=np.int64),
        np.asarray(ends, dtype=np.int64),
        group_rows=np.asarray(rows, dtype=np.int64),
    )


def check_spmm_rules(g: CooGraph, sched: Schedule) -> None:
    """Assert the three edge-parallel ownership rules.

    1. every edge maps to exactly one warp; 2. row ids inside a warp are
    non-decreasing (CSR-like order); 3. only consecutive CTAs may share a
    row id.
    """
    if sched.kind != "edge_parallel":
        raise ValueError("rule check applies to edge-parallel schedules")
    e = g.num_edges
    owned = np.zeros(e, dtype=np.int64)
    for w in range(sched.num_warps):
        lo, hi = int(sched.starts[w]), int(sched.ends[w])
        owned[lo:hi] += 1
        seg = g.rows[lo:hi]
        if seg.size and np.any(np.diff(seg) < 0):
            raise AssertionError(f"warp {w}: row ids decrease")
    if e and not np.all(owned == 1):
        raise AssertionError("edge ownership is not a partition")
    # Rows shared between CTAs must span a consecutive CTA range.
    cta_ids = np.repeat(
        np.arange(sched.num_warps, dtype=np.int64) // sched.warps_per_cta,
        (sched.ends - sched.starts),
    )
    for row in np.unique(g.rows):
        ctas = np.unique(cta_ids[g.rows == row])
        if ctas.size and not np.array_equal(ctas, np.arange(ctas[0], ctas[-1] + 1)):
            raise AssertionError(f"row {row} spans non-consecutive CTAs")
