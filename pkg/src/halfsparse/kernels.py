"""Sparse kernels with schedule-faithful reduction order and exact metrics.

Every kernel computes in the input tensor's mode (half or float32) with one
rounding per arithmetic step, in an order fixed by the schedule:

* edge-parallel SpMM: each warp keeps one sequential running fused
  multiply-add over its owned edges; a row's per-warp partials inside a CTA
  merge by an adjacent-pair tree; each CTA's last row goes to a staging slot
  and a follow-up pass folds carry-outs into the output in ascending CTA
  order. No write is atomic and no row is written by two owners.
* vertex-grouped SpMM: one warp per <=32-neighbor group, sequential fold
  inside the group, per-row merge of group partials in ascending group
  order. `staging` routes multi-group partials through carry slots;
  `atomic_model` models a serialized ascending-order atomic accumulation.
  Both orders coincide, so the outputs are bit-identical and only the
  conflict counters differ.
* SDDMM: per-edge dot product in one canonical order shared by all widths:
  per-feature products rounded individually, adjacent feature pairs summed,
  then an adjacent-pair tree over the F/2 partials. Width changes the load
  and shuffle counting only.

Reduction scaling:

* post: raw running sums, degree norm applied once to the assembled row.
* pre: the per-edge multiplier is scaled by the row factor at load (one
  extra rounding per edge), accumulation stays fused.
* discretized: raw batches of k = 64/F consecutive same-row edges (one warp
  iteration; a whole neighbor group in the vertex kernel), each batch
  partial folded into the running row partial through the full-row-degree
  factor. Carry-outs leave the CTA already scaled.

Norms: left divides features by the provider's column degree at load, right
by the destination's row degree, both splits square roots to each side.
Degree reciprocals are computed in float32 and rounded to the compute mode
once per row; zero-degree rows skip the norm and stay zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import simt
from .halfnum import to_half
from .sparse import CooGraph, CsrGraph, DenseTensor, col_degrees, csr_to_coo
from .simt import KernelMetrics, Schedule

_DTYPES = {"half": np.float16, "float32": np.float32}

SCALINGS = ("post", "pre", "discretized")
NORMS = ("none", "left", "right", "both")


@dataclass(frozen=True)
class Reduction:
    """Scaling strategy + degree-norm placement for one SpMM call."""

    scaling: str = "post"
    norm: str = "none"

    def __post_init__(self):
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.scaling == "discretized" and self.norm == "none":
            raise ValueError("discretized scaling requires a degree norm")


@dataclass
class StagingBuffer:
    """Carry-out slots written non-atomically by CTA (or neighbor group).

    rows[i] is the destination row of slot i, partials[i] the already-scaled
    partial the follow-up pass folds in. One slot per CTA in the
    edge-parallel protocol, one per neighbor group in the vertex protocol.
    """

    rows: np.ndarray
    partials: np.ndarray

    @property
    def capacity(self):
        return int(self.rows.size)

    def slot_for(self, owner: int) -> int:
        return owner


def _rounder(dtype):
    if dtype == np.float16:
        def rnd(a):
            return to_half(a).astype(np.float64)

        return rnd

    def rnd(a):
        with np.errstate(over="ignore", invalid="ignore"):
            return a.astype(dtype).astype(np.float64)

    return rnd


def _mode_of(x: DenseTensor):
    return _DTYPES[x.mode]


def _check_width(feature_len, width):
    lanes = simt.WIDTH_LANES.get(width)
    if lanes is None:
        raise ValueError(f"unknown width {width!r}")
    if feature_len % 2 or feature_len % lanes:
        raise ValueError(
            f"feature length {feature_len} must be even and divisible by {width} lanes"
        )


def _degree_factors(g: CooGraph, reduction: Reduction, dtype):
    """(per-edge input scale, per-row output factor), both already rounded.

    Input scale multiplies the loaded feature row (left side of the norm);
    the output factor is what post/pre/discretized place at their respective
    points (right side).
    """
    deg_r = np.bincount(g.rows, minlength=g.n).astype(np.float32)
    in_scale = out_factor = None
    rnd = _rounder(dtype)
    with np.errstate(divide="ignore"):
        if reduction.norm in ("left", "both"):
            deg_c = col_degrees(g).astype(np.float32)
            inv = np.where(deg_c > 0, 1.0 / deg_c, 0.0)
            if reduction.norm == "both":
                inv = np.where(deg_c > 0, 1.0 / np.sqrt(deg_c), 0.0)
            in_scale = rnd(inv)
        if reduction.norm in ("right", "both"):
            inv = np.where(deg_r > 0, 1.0 / deg_r, 0.0)
            if reduction.norm == "both":
                inv = np.where(deg_r > 0, 1.0 / np.sqrt(deg_r), 0.0)
            out_factor = rnd(inv)
    return in_scale, out_factor


# ── Edge-parallel plan structures (cached on the schedule) ──────────────


def _edge_plan(g: CooGraph, sched: Schedule):
    plan = sched._cache.get("edge_plan")
    if plan is not None:
        return plan
    e = g.num_edges
    rows = g.rows
    is_start = np.zeros(e, dtype=bool)
    is_start[sched.starts] = True
    is_start[0] = True
    is_start[1:] |= rows[1:] != rows[:-1]
    seg_start = np.flatnonzero(is_start)
    seg_end = np.append(seg_start[1:], e)
    seg_row = rows[seg_start]
    seg_warp = np.searchsorted(sched.starts, seg_start, side="right") - 1
    seg_cta = seg_warp // sched.warps_per_cta

    # Chains: consecutive segments of one row inside one CTA.
    n_segs = seg_start.size
    brk = np.ones(n_segs, dtype=bool)
    brk[1:] = (seg_cta[1:] != seg_cta[:-1]) | (seg_row[1:] != seg_row[:-1])
    chain_id = np.cumsum(brk) - 1
    n_chains = int(chain_id[-1]) + 1
    first = np.flatnonzero(brk)
    chain_row = seg_row[first]
    chain_cta = seg_cta[first]
    chain_len = np.bincount(chain_id, minlength=n_chains)
    # One carry per CTA: the chain holding its last segment (= last chain).
    is_carry = np.zeros(n_chains, dtype=bool)
    is_carry[-1] = True
    is_carry[:-1] = chain_cta[1:] != chain_cta[:-1]

    mmax = int(chain_len.max())
    members = np.full((n_chains, mmax), -1, dtype=np.int64)
    pos = np.arange(n_segs) - first[chain_id]
    members[chain_id, pos] = np.arange(n_segs)

    # Follow-up ordering: carries are already ascending by CTA; group by row.
    carry_rows = chain_row[is_carry]
    order = np.argsort(carry_rows, kind="stable")  # (row, cta) ascending
    sorted_rows = carry_rows[order]
    grp_first = np.ones(sorted_rows.size, dtype=bool)
    grp_first[1:] = sorted_rows[1:] != sorted_rows[:-1]
    grp_pos = np.arange(sorted_rows.size) - np.flatnonzero(grp_first)[
        np.cumsum(grp_first) - 1
    ]

    plan = {
        "seg_start": seg_start,
        "seg_end": seg_end,
        "seg_row": seg_row,
        "seg_warp": seg_warp,
        "chain_members": members,
        "chain_row": chain_row,
        "chain_is_carry": is_carry,
        "carry_order": order,
        "carry_grp_pos": grp_pos,
    }
    sched._cache["edge_plan"] = plan
    return plan


def _position_plan(plan, sched):
    cached = sched._cache.get("positions")
    if cached is not None:
        return cached
    seg_start, seg_end = plan["seg_start"], plan["seg_end"]
    seg_len = seg_end - seg_start
    lmax = int(seg_len.max())
    pos = np.arange(lmax, dtype=np.int64)
    idx = np.minimum(seg_start[:, None] + pos[None, :], seg_end[:, None] - 1)
    valid = pos[None, :] < seg_len[:, None]
    sched._cache["positions"] = (idx, valid)
    return idx, valid


def _batch_plan(plan, sched, k):
    cached = sched._cache.get(("batches", k))
    if cached is not None:
        return cached
    seg_start, seg_end = plan["seg_start"], plan["seg_end"]
    seg_len = seg_end - seg_start
    n_b = -(-seg_len // k)
    first_batch = np.zeros(seg_len.size, dtype=np.int64)
    np.cumsum(n_b[:-1], out=first_batch[1:])
    n_batches = int(n_b.sum())
    batch_seg = np.repeat(np.arange(seg_len.size), n_b)
    batch_off = np.arange(n_batches) - first_batch[batch_seg]
    batch_start = seg_start[batch_seg] + batch_off * k
    batch_len = np.minimum(k, seg_end[batch_seg] - batch_start)

    pos = np.arange(k, dtype=np.int64)
    eidx = np.minimum(batch_start[:, None] + pos[None, :], seg_end[batch_seg][:, None] - 1)
    evalid = pos[None, :] < batch_len[:, None]

    bmax = int(n_b.max())
    bpos = np.arange(bmax, dtype=np.int64)
    bidx = np.minimum(first_batch[:, None] + bpos[None, :], first_batch[:, None] + (n_b - 1)[:, None])
    bvalid = bpos[None, :] < n_b[:, None]
    cached = (eidx, evalid, bidx, bvalid, batch_seg)
    sched._cache[("batches", k)] = cached
    return cached


# ── Shared numeric pieces ───────────────────────────────────────────────


def _tree_merge(values, valid, rnd):
    """Adjacent-pair tree over axis 1; invalid slots pass through."""
    while values.shape[1] > 1:
        if values.shape[1] % 2:
            values = np.concatenate([values, values[:, :1] * 0], axis=1)
            valid = np.concatenate([valid, np.zeros_like(valid[:, :1])], axis=1)
        va, vb = values[:, 0::2], values[:, 1::2]
        ma, mb = valid[:, 0::2], valid[:, 1::2]
        merged = np.where(mb[..., None], rnd(va + vb), va)
        values, valid = merged, ma | mb
    return values[:, 0]


def _sequential_rows(y, rows, vals, pos, rnd):
    """Fold vals into y[rows] one position rank at a time (ascending order)."""
    for j in range(int(pos.max(initial=-1)) + 1):
        sel = pos == j
        r = rows[sel]
        y[r] = rnd(y[r] + vals[sel])
    return y


def _assemble_edge_parallel(seg_vals, plan, n, feat, rnd):
    members = plan["chain_members"]
    gathered = seg_vals[np.maximum(members, 0)]
    roots = _tree_merge(gathered, members >= 0, rnd)

    y = np.zeros((n, feat), dtype=np.float64)
    is_carry = plan["chain_is_carry"]
    direct = ~is_carry
    y[plan["chain_row"][direct]] = roots[direct]

    carry_vals = roots[is_carry]
    order = plan["carry_order"]
    rows_sorted = plan["chain_row"][is_carry][order]
    vals_sorted = carry_vals[order]
    y = _sequential_rows(y, rows_sorted, vals_sorted, plan["carry_grp_pos"], rnd)
    staging = StagingBuffer(plan["chain_row"][is_carry].copy(), carry_vals)
    return y, staging


def _masked_fold(prods, idx, valid, acc, rnd):
    for i in range(idx.shape[1]):
        nxt = rnd(prods[idx[:, i]] + acc)
        acc = np.where(valid[:, i][:, None], nxt, acc)
    return acc


def _edge_metrics_spmm(g, sched, feat, width, weighted, plan):
    m = KernelMetrics(coalesced_bytes_per_warp_load=simt.warp_load_bytes(width))
    lanes = simt.WIDTH_LANES[width]
    k = simt.subwarp_layout(feat).subwarps
    owned = (sched.ends - sched.starts).astype(np.int64)
    nze_t = -(-owned // simt.WARP_SIZE)
    m.load_transactions += int(nze_t.sum())
    m.load_bytes += int(nze_t.sum()) * simt.WARP_SIZE * simt._NZE_BYTES_COO
    if weighted:
        w_t = -(-owned // (simt.WARP_SIZE * lanes))
        m.load_transactions += int(w_t.sum())
        m.load_bytes += int(w_t.sum()) * simt.warp_load_bytes(width)
    iters = -(-owned // k)
    per_iter = simt.feature_transactions(k * feat, width)
    m.load_transactions += int(iters.sum()) * per_iter
    m.load_bytes += int(iters.sum()) * per_iter * simt.warp_load_bytes(width)
    m.barrier_waits += sched.num_warps

    chain_len = (plan["chain_members"] >= 0).sum(axis=1)
    multi = chain_len[chain_len > 1]
    m.intra_cta_rounds += int(sum((int(c) - 1).bit_length() for c in multi))
    m.staging_writes += sched.num_ctas
    return m


# ── Edge-parallel SpMM ──────────────────────────────────────────────────


def _spmm_edge_parallel(g, w_e, x, sched, reduction, width, return_staging):
    dtype = _mode_of(x)
    feat = x.cols
    _check_width(feat, width)
    if x.rows != g.n:
        raise ValueError(f"feature tensor has {x.rows} rows for {g.n} vertices")
    if sched is None:
        sched = simt.plan_edge_parallel(g)
    if sched.kind != "edge_parallel":
        raise ValueError("expected an edge-parallel schedule")
    rnd = _rounder(dtype)

    if w_e is not None:
        w_e = np.asarray(w_e)
        if w_e.shape != (g.num_edges,):
            raise ValueError("edge weights must be one value per edge")
        if w_e.dtype != dtype:
            raise ValueError(f"edge weights must be {x.mode}")

    if g.num_edges == 0:
        metrics = KernelMetrics(
            coalesced_bytes_per_warp_load=simt.warp_load_bytes(width)
        )
        out = DenseTensor(np.zeros((g.n, feat), dtype=dtype))
        empty = StagingBuffer(np.zeros(0, np.int64), np.zeros((0, feat)))
        return (out, metrics, empty) if return_staging else (out, metrics)

    plan = _edge_plan(g, sched)
    in_scale, out_factor = _degree_factors(g, reduction, dtype)

    xw = x.data.astype(np.float64)
    if in_scale is not None:
        xw = rnd(xw * in_scale[:, None])  # left-side scaling at feature load
    feats = xw[g.cols]

    mult = np.ones(g.num_edges, dtype=np.float64) if w_e is None else w_e.astype(np.float64)
    if reduction.scaling == "pre" and out_factor is not None:
        f_edge = out_factor[g.rows]
        mult = f_edge if w_e is None else rnd(mult * f_edge)
    prods = mult[:, None] * feats  # exact in float64; rounding happens per step

    if reduction.scaling == "discretized":
        k = simt.subwarp_layout(feat).subwarps
        eidx, evalid, bidx, bvalid, _ = _batch_plan(plan, sched, k)
        raw = _masked_fold(prods, eidx, evalid, np.zeros((eidx.shape[0], feat)), rnd)
        close = None if out_factor is None else out_factor[plan["seg_row"]]
        seg_vals = np.zeros((bidx.shape[0], feat), dtype=np.float64)
        for j in range(bidx.shape[1]):
            batch = raw[bidx[:, j]]
            folded = batch + seg_vals if close is None else batch * close[:, None] + seg_vals
            seg_vals = np.where(bvalid[:, j][:, None], rnd(folded), seg_vals)
    else:
        idx, valid = _position_plan(plan, sched)
        seg_vals = _masked_fold(prods, idx, valid, np.zeros((idx.shape[0], feat)), rnd)

    y, staging = _assemble_edge_parallel(seg_vals, plan, g.n, feat, rnd)
    if reduction.scaling == "post" and out_factor is not None:
        scaled_rows = np.flatnonzero(out_factor > 0)
        y[scaled_rows] = rnd(y[scaled_rows] * out_factor[scaled_rows, None])

    metrics = _edge_metrics_spmm(g, sched, feat, width, w_e is not None, plan)
    out = DenseTensor(y.astype(dtype))
    staging = StagingBuffer(staging.rows, staging.partials.astype(dtype))
    return (out, metrics, staging) if return_staging else (out, metrics)


def spmm_v(g, x, schedule=None, reduction=Reduction(), width="half2", return_staging=False):
    """Aggregate neighbor features: Y[r] = reduce over edges (r,c) of X[c]."""
    return _spmm_edge_parallel(g, None, x, schedule, reduction, width, return_staging)


def spmm_ve(g, w_e, x, schedule=None, reduction=Reduction(), width="half2", return_staging=False):
    """Weighted aggregation: Y[r] = reduce over edges (r,c) of w_e * X[c]."""
    return _spmm_edge_parallel(g, w_e, x, schedule, reduction, width, return_staging)


# ── SDDMM ───────────────────────────────────────────────────────────────


def sddmm(g, x, y, schedule=None, width="half2"):
    """Per-edge dot products W[e] = X[row(e)] . Y[col(e)].

    The numeric reduction order is width-independent (products, adjacent
    pairs, then an adjacent-pair tree); width drives the counting model.
    """
    if x.mode != y.mode:
        raise ValueError("operand modes differ")
    if x.cols != y.cols:
        raise ValueError("operand feature lengths differ")
    if x.rows != g.n or y.rows != g.n:
        raise ValueError("operand rows must match the vertex count")
    feat = x.cols
    _check_width(feat, width)
    dtype = _mode_of(x)
    rnd = _rounder(dtype)
    if schedule is None:
        schedule = simt.plan_edge_parallel(g)
    if schedule.kind != "edge_parallel":
        raise ValueError("expected an edge-parallel schedule")

    rounds = simt.sddmm_reduction_rounds(feat, width)
    metrics = KernelMetrics(
        coalesced_bytes_per_warp_load=simt.warp_load_bytes(width),
        shuffle_rounds=rounds * g.num_edges,
    )
    lanes_t = simt.feature_transactions(feat, width)
    owned = (schedule.ends - schedule.starts).astype(np.int64)
    nze_t = -(-owned // simt.WARP_SIZE)
    metrics.load_transactions = int(nze_t.sum()) + 2 * g.num_edges * lanes_t
    metrics.load_bytes = (
        int(nze_t.sum()) * simt.WARP_SIZE * simt._NZE_BYTES_COO
        + 2 * g.num_edges * lanes_t * simt.warp_load_bytes(width)
    )
    metrics.barrier_waits = schedule.num_warps

    if g.num_edges == 0:
        return np.zeros(0, dtype=dtype), metrics

    prods = rnd(x.data.astype(np.float64)[g.rows] * y.data.astype(np.float64)[g.cols])
    vals = rnd(prods[:, 0::2] + prods[:, 1::2])
    while vals.shape[1] > 1:
        m = vals.shape[1]
        pairs = m // 2
        nxt = rnd(vals[:, 0 : 2 * pairs : 2] + vals[:, 1 : 2 * pairs : 2])
        if m % 2:
            nxt = np.concatenate([nxt, vals[:, -1:]], axis=1)
        vals = nxt
    return vals[:, 0].astype(dtype), metrics


# ── Vertex-grouped SpMM ─────────────────────────────────────────────────

WRITE_MODES = ("staging", "atomic_model")


def spmm_vertex_grouped(
    csr, x, schedule=None, reduction=Reduction(), write_mode="staging",
    width="half2", return_staging=False,
):
    """Neighbor-group SpMM over a CSR graph.

    Groups of <=32 edges fold sequentially; a row's group partials merge in
    ascending group order. Both write modes produce identical values:
    staging stores multi-group partials in carry slots (atomic_writes == 0),
    atomic_model counts each merge past the first write as a serialized
    atomic update.
    """
    if not isinstance(csr, CsrGraph):
        raise ValueError("vertex-grouped kernel expects a CSR graph")
    if write_mode not in WRITE_MODES:
        raise ValueError(f"unknown write mode {write_mode!r}")
    feat = x.cols
    _check_width(feat, width)
    if x.rows != csr.n:
        raise ValueError(f"feature tensor has {x.rows} rows for {csr.n} vertices")
    dtype = _mode_of(x)
    rnd = _rounder(dtype)
    if schedule is None:
        schedule = simt.plan_vertex_grouped(csr)
    if schedule.kind != "vertex_grouped":
        raise ValueError("expected a vertex-grouped schedule")

    g = csr_to_coo(csr)
    in_scale, out_factor = _degree_factors(g, reduction, dtype)

    metrics = KernelMetrics(
        coalesced_bytes_per_warp_load=simt.warp_load_bytes(width)
    )
    n_groups = schedule.num_warps
    glen = (schedule.ends - schedule.starts).astype(np.int64)
    per_edge_t = simt.feature_transactions(feat, width)
    metrics.load_transactions = n_groups + per_edge_t * int(glen.sum())
    metrics.load_bytes = (
        n_groups * simt.WARP_SIZE * simt._NZE_BYTES_CSR
        + per_edge_t * int(glen.sum()) * simt.warp_load_bytes(width)
    )
    metrics.barrier_waits = n_groups

    if csr.num_edges == 0:
        out = DenseTensor(np.zeros((csr.n, feat), dtype=dtype))
        empty = StagingBuffer(np.zeros(0, np.int64), np.zeros((0, feat), dtype=dtype))
        return (out, metrics, empty) if return_staging else (out, metrics)

    xw = x.data.astype(np.float64)
    if in_scale is not None:
        xw = rnd(xw * in_scale[:, None])
    feats = xw[csr.cols]

    rows_g = schedule.group_rows
    mult = np.ones(csr.num_edges, dtype=np.float64)
    if reduction.scaling == "pre" and out_factor is not None:
        mult = out_factor[g.rows]
    prods = mult[:, None] * feats

    lmax = int(glen.max())
    pos = np.arange(lmax, dtype=np.int64)
    idx = np.minimum(schedule.starts[:, None] + pos[None, :], schedule.ends[:, None] - 1)
    valid = pos[None, :] < glen[:, None]
    raw = _masked_fold(prods, idx, valid, np.zeros((n_groups, feat)), rnd)

    if reduction.scaling == "discretized" and out_factor is not None:
        partials = rnd(raw * out_factor[rows_g][:, None])
    else:
        partials = raw

    # Merge per row in ascending group order (groups are already row-sorted).
    grp_first = np.ones(n_groups, dtype=bool)
    grp_first[1:] = rows_g[1:] != rows_g[:-1]
    grp_pos = np.arange(n_groups) - np.flatnonzero(grp_first)[np.cumsum(grp_first) - 1]
    y = np.zeros((csr.n, feat), dtype=np.float64)
    y[rows_g[grp_pos == 0]] = partials[grp_pos == 0]
    tail = grp_pos > 0
    y = _sequential_rows(y, rows_g[tail], partials[tail], grp_pos[tail] - 1, rnd)

    if reduction.scaling == "post" and out_factor is not None:
        scaled_rows = np.flatnonzero(out_factor > 0)
        y[scaled_rows] = rnd(y[scaled_rows] * out_factor[scaled_rows, None])

    groups_per_row = np.bincount(rows_g, minlength=csr.n)
    multi = groups_per_row > 1
    conflicted = multi[rows_g]
    if write_mode == "staging":
        metrics.staging_writes = int(conflicted.sum())
        staging = StagingBuffer(
            rows_g[conflicted].copy(), partials[conflicted].astype(dtype)
        )
    else:
        metrics.atomic_writes = int(np.maximum(groups_per_row - 1, 0).sum())
        staging = StagingBuffer(np.zeros(0, np.int64), np.zeros((0, feat), dtype=dtype))

    out = DenseTensor(y.astype(dtype))
    return (out, metrics, staging) if return_staging else (out, metrics)


# ── Order-faithful single-threaded reference ────────────────────────────


def scalar_reference(kind, g, x, schedule=None, w_e=None, y=None,
                     reduction=Reduction(), write_mode="staging"):
    """Slow single-stream mirror of each kernel's reduction order.

    Walks warps and edges one at a time with per-step rounded ops; shares no
    scheduling machinery with the staged kernels, so differential tests can
    compare bit patterns. Feature lanes are independent channels and ride
    along as vectors.
    """
    if kind in ("spmm_v", "spmm_ve"):
        return _ref_spmm_edge(g, w_e if kind == "spmm_ve" else None, x, schedule, reduction)
    if kind == "sddmm":
        return _ref_sddmm(g, x, y)
    if kind == "spmm_vertex_grouped":
        return _ref_spmm_vertex(g, x, schedule, reduction)
    raise ValueError(f"unknown reference kind {kind!r}")


def _ref_factors(n, rows, cols, reduction, dtype):
    deg_r = np.bincount(rows, minlength=n).astype(np.float32)
    deg_c = np.bincount(cols, minlength=n).astype(np.float32)
    with np.errstate(divide="ignore"):
        if reduction.norm == "left":
            fin = np.where(deg_c > 0, 1.0 / deg_c, 0.0)
        elif reduction.norm == "both":
            fin = np.where(deg_c > 0, 1.0 / np.sqrt(deg_c), 0.0)
        else:
            fin = None
        if reduction.norm == "right":
            fout = np.where(deg_r > 0, 1.0 / deg_r, 0.0)
        elif reduction.norm == "both":
            fout = np.where(deg_r > 0, 1.0 / np.sqrt(deg_r), 0.0)
        else:
            fout = None
    conv = lambda f: None if f is None else f.astype(dtype).astype(np.float64)
    return conv(fin), conv(fout)


def _ref_spmm_edge(g, w_e, x, sched, reduction):
    if sched is None:
        sched = simt.plan_edge_parallel(g)
    dtype = _mode_of(x)
    rnd = _rounder(dtype)
    feat = x.cols
    fin, fout = _ref_factors(g.n, g.rows, g.cols, reduction, dtype)
    k = simt.subwarp_layout(feat).subwarps

    xw = x.data.astype(np.float64)
    if fin is not None:
        xw = rnd(xw * fin[:, None])
    w64 = None if w_e is None else np.asarray(w_e).astype(np.float64)

    def edge_mult(e):
        row = g.rows[e]
        m = 1.0 if w64 is None else w64[e]
        if reduction.scaling == "pre" and fout is not None:
            m = fout[row] if w64 is None else rnd(np.float64(m * fout[row]))
        return m

    # Per-CTA ordered partial lists: (row, value) in edge order.
    cta_partials = [[] for _ in range(sched.num_ctas)]
    for w in range(sched.num_warps):
        lo, hi = int(sched.starts[w]), int(sched.ends[w])
        cta = sched.cta_of(w)
        e = lo
        while e < hi:
            row = int(g.rows[e])
            if reduction.scaling == "discretized":
                acc = np.zeros(feat)
                raw = np.zeros(feat)
                count = 0
                while e < hi and g.rows[e] == row:
                    raw = rnd(edge_mult(e) * xw[g.cols[e]] + raw)
                    count += 1
                    e += 1
                    closing = count == k or e >= hi or g.rows[e] != row
                    if closing:
                        folded = raw + acc if fout is None else raw * fout[row] + acc
                        acc = rnd(folded)
                        raw = np.zeros(feat)
                        count = 0
            else:
                acc = np.zeros(feat)
                while e < hi and g.rows[e] == row:
                    acc = rnd(edge_mult(e) * xw[g.cols[e]] + acc)
                    e += 1
            cta_partials[cta].append((row, acc))

    def tree(vals):
        while len(vals) > 1:
            nxt = []
            for i in range(0, len(vals) - 1, 2):
                nxt.append(rnd(vals[i] + vals[i + 1]))
            if len(vals) % 2:
                nxt.append(vals[-1])
            vals = nxt
        return vals[0]

    y = np.zeros((g.n, feat), dtype=np.float64)
    carries = []  # (row, value) in CTA order
    for parts in cta_partials:
        i = 0
        while i < len(parts):
            j = i
            while j + 1 < len(parts) and parts[j + 1][0] == parts[i][0]:
                j += 1
            merged = tree([v for _, v in parts[i : j + 1]])
            if j == len(parts) - 1:
                carries.append((parts[i][0], merged))
            else:
                y[parts[i][0]] = merged
            i = j + 1
    by_row = {}
    for row, val in carries:
        by_row.setdefault(row, []).append(val)
    for row in by_row:
        for val in by_row[row]:
            y[row] = rnd(y[row] + val)

    if reduction.scaling == "post" and fout is not None:
        for row in range(g.n):
            if fout[row] > 0:
                y[row] = rnd(y[row] * fout[row])
    return DenseTensor(y.astype(dtype))


def _ref_sddmm(g, x, y):
    dtype = _mode_of(x)
    rnd = _rounder(dtype)
    xw = x.data.astype(np.float64)
    yw = y.data.astype(np.float64)
    out = np.zeros(g.num_edges, dtype=np.float64)
    for e in range(g.num_edges):
        p = rnd(xw[g.rows[e]] * yw[g.cols[e]])
        vals = [rnd(p[i] + p[i + 1]) for i in range(0, p.size, 2)]
        while len(vals) > 1:
            nxt = [rnd(vals[i] + vals[i + 1]) for i in range(0, len(vals) - 1, 2)]
            if len(vals) % 2:
                nxt.append(vals[-1])
            vals = nxt
        out[e] = vals[0]
    return out.astype(dtype)


def _ref_spmm_vertex(csr, x, sched, reduction):
    if sched is None:
        sched = simt.plan_vertex_grouped(csr)
    dtype = _mode_of(x)
    rnd = _rounder(dtype)
    feat = x.cols
    g = csr_to_coo(csr)
    fin, fout = _ref_factors(csr.n, g.rows, g.cols, reduction, dtype)
    xw = x.data.astype(np.float64)
    if fin is not None:
        xw = rnd(xw * fin[:, None])

    y = np.zeros((csr.n, feat), dtype=np.float64)
    seen = np.zeros(csr.n, dtype=bool)
    for w in range(sched.num_warps):
        row = int(sched.group_rows[w])
        acc = np.zeros(feat)
        for e in range(int(sched.starts[w]), int(sched.ends[w])):
            m = 1.0 if not (reduction.scaling == "pre" and fout is not None) else fout[row]
            acc = rnd(m * xw[csr.cols[e]] + acc)
        if reduction.scaling == "discretized" and fout is not None:
            acc = rnd(acc * fout[row])
        if not seen[row]:
            y[row] = acc
            seen[row] = True
        else:
            y[row] = rnd(y[row] + acc)
    if reduction.scaling == "post" and fout is not None:
        for row in range(csr.n):
            if fout[row] > 0:
                y[row] = rnd(y[row] * fout[row])
    return DenseTensor(y.astype(dtype))
