"""Mixed-precision GNN training on the sparse kernels.

A small reverse-mode tape drives three layer types (GCN, GIN, GAT single
head). Parameters live as float32 masters; in half mode each step publishes
half copies, runs the whole graph pipeline in half, and converts only the
logits to float32 for the cross-entropy loss. That one convert node is the
only precision crossing inside the differentiated region, so a training
step counts exactly one forward and one backward conversion.

Dense matmuls accumulate in float32 and round once to the compute mode.
Sparse aggregation calls the staged kernels; its backward runs the
transposed graph with the left/right sides of the norm swapped, which is
the exact adjoint. Attention scores come from a real two-feature SDDMM
over [s_l | 1] and [1 | s_r]; the softmax subtracts the row max (shifted
scores never exceed zero), exponentiates through shadow_exp, and divides by
an adjacent-pair tree sum of the row's terms, all in half with zero
conversions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels, simt
from .halfnum import to_half
from .kernels import Reduction, _tree_merge
from .sparse import CooGraph, DenseTensor, transpose

_DTYPES = {"half": np.float16, "float32": np.float32}


class NanLossError(RuntimeError):
    """Training loss became NaN; carries the epoch and overflow counters."""

    def __init__(self, epoch, counters):
        super().__init__(f"loss is NaN at epoch {epoch}")
        self.epoch = epoch
        self.counters = counters


@dataclass
class ConversionCounter:
    """Counts precision-crossing graph ops (forward casts and their adjoints)."""

    forward: int = 0
    backward: int = 0

    @property
    def total(self):
        return self.forward + self.backward

    def reset(self):
        self.forward = 0
        self.backward = 0


@dataclass
class OverflowCounters:
    """Nonfinite-output tallies per (layer, op) tag."""

    inf: dict = field(default_factory=dict)
    nan: dict = field(default_factory=dict)

    def observe(self, tag, arr):
        n_inf = int(np.isinf(arr).sum())
        n_nan = int(np.isnan(arr).sum())
        if n_inf:
            self.inf[tag] = self.inf.get(tag, 0) + n_inf
        if n_nan:
            self.nan[tag] = self.nan.get(tag, 0) + n_nan

    def totals(self):
        return sum(self.inf.values()), sum(self.nan.values())

    def reset(self):
        self.inf.clear()
        self.nan.clear()


# ── Reverse-mode tape ───────────────────────────────────────────────────


class Tensor:
    """Array node on a dynamic tape. Mode follows the dtype (half/float32)."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float16, np.float32):
            raise ValueError("tensors are half or float32")
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def mode(self):
        return "half" if self.data.dtype == np.float16 else "float32"

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g):
        g = np.asarray(g, dtype=self.data.dtype)
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, seed=None):
        order = []
        seen = set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            order.append(t)

        visit(self)
        self._accumulate(np.ones_like(self.data) if seed is None else seed)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)


def _round(a, dtype):
    if dtype == np.float16:
        return to_half(a)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(a).astype(dtype)


def _dtype_of(t: Tensor):
    return t.data.dtype


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Dense product with float32 accumulation and one final rounding."""
    dtype = _dtype_of(a)

    def mm(x, y):
        with np.errstate(over="ignore", invalid="ignore"):
            return _round(x.astype(np.float32) @ y.astype(np.float32), dtype)

    out = Tensor(mm(a.data, b.data), parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(mm(g, b.data.T))
        if b.requires_grad:
            b._accumulate(mm(a.data.T, g))

    out._backward = bwd
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    dtype = _dtype_of(x)
    out = Tensor(_round(x.data.astype(np.float64) + b.data.astype(np.float64), dtype),
                 parents=(x, b))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g)
        if b.requires_grad:
            b._accumulate(_round(g.astype(np.float32).sum(axis=0), dtype))

    out._backward = bwd
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, np.zeros_like(x.data)), parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.where(mask, g, np.zeros_like(g)))

    out._backward = bwd
    return out


def leaky_relu(x: Tensor, slope=0.2) -> Tensor:
    dtype = _dtype_of(x)
    mask = x.data > 0
    lo = _round(x.data.astype(np.float64) * slope, dtype)
    out = Tensor(np.where(mask, x.data, lo), parents=(x,))

    def bwd(g):
        if x.requires_grad:
            neg = _round(g.astype(np.float64) * slope, dtype)
            x._accumulate(np.where(mask, g, neg))

    out._backward = bwd
    return out


def convert(x: Tensor, mode: str, counter: ConversionCounter | None = None) -> Tensor:
    """Precision crossing as a graph op; the only place conversions count."""
    dtype = _DTYPES[mode]
    if counter is not None:
        counter.forward += 1
    out = Tensor(_round(x.data, dtype), parents=(x,))

    def bwd(g):
        if x.requires_grad:
            if counter is not None:
                counter.backward += 1
            x._accumulate(_round(g, x.data.dtype))

    out._backward = bwd
    return out


def scale_combine(x: Tensor, a: Tensor, one_plus_eps: Tensor, lam: float) -> Tensor:
    """(1 + eps) * x + lam * a with per-term rounding (GIN combine)."""
    dtype = _dtype_of(x)
    u = _round(x.data.astype(np.float64) * float(one_plus_eps.data), dtype)
    v = _round(a.data.astype(np.float64) * lam, dtype)
    out = Tensor(_round(u.astype(np.float64) + v.astype(np.float64), dtype),
                 parents=(x, a, one_plus_eps))

    def bwd(g):
        g64 = g.astype(np.float64)
        if x.requires_grad:
            x._accumulate(_round(g64 * float(one_plus_eps.data), dtype))
        if a.requires_grad:
            a._accumulate(_round(g64 * lam, dtype))
        if one_plus_eps.requires_grad:
            one_plus_eps._accumulate(
                _round(np.float64((x.data.astype(np.float64) * g64).sum()), dtype)
            )

    out._backward = bwd
    return out


# ── Graph bundle and sparse autograd ops ────────────────────────────────


@dataclass
class GraphBundle:
    """Forward graph plus its transpose and cached schedules."""

    g: CooGraph
    gt: CooGraph
    perm: np.ndarray
    sched_fw: simt.Schedule
    sched_bw: simt.Schedule

    @classmethod
    def build(cls, g: CooGraph, warp_chunk=simt.DEFAULT_WARP_CHUNK,
              warps_per_cta=simt.DEFAULT_WARPS_PER_CTA):
        gt, perm = transpose(g, return_perm=True)
        return cls(
            g=g, gt=gt, perm=perm,
            sched_fw=simt.plan_edge_parallel(g, warp_chunk, warps_per_cta),
            sched_bw=simt.plan_edge_parallel(gt, warp_chunk, warps_per_cta),
        )


_MIRROR = {"none": "none", "left": "right", "right": "left", "both": "both"}


def _mirror(reduction: Reduction) -> Reduction:
    return Reduction(reduction.scaling, _MIRROR[reduction.norm])


def spmm_agg(bundle: GraphBundle, x: Tensor, reduction: Reduction,
             width="half2", overflow=None, tag="agg") -> Tensor:
    """Y = norm-scaled aggregation of X; adjoint runs the transposed graph."""
    y, _ = kernels.spmm_v(bundle.g, DenseTensor(x.data), bundle.sched_fw,
                          reduction, width)
    if overflow is not None:
        overflow.observe(tag, y.data)
    out = Tensor(y.data, parents=(x,))

    def bwd(g):
        if x.requires_grad:
            gx, _ = kernels.spmm_v(bundle.gt, DenseTensor(g), bundle.sched_bw,
                                   _mirror(reduction), width)
            x._accumulate(gx.data)

    out._backward = bwd
    return out


def spmm_weighted(bundle: GraphBundle, w: Tensor, x: Tensor,
                  width="half2", overflow=None, tag="agg") -> Tensor:
    """Y[r] = sum over edges (r,c) of w[e] * X[c]; no norm (weights carry it)."""
    red = Reduction("post", "none")
    y, _ = kernels.spmm_ve(bundle.g, w.data, DenseTensor(x.data),
                           bundle.sched_fw, red, width)
    if overflow is not None:
        overflow.observe(tag, y.data)
    out = Tensor(y.data, parents=(w, x))

    def bwd(g):
        if w.requires_grad:
            gw, _ = kernels.sddmm(bundle.g, DenseTensor(g), DenseTensor(x.data),
                                  bundle.sched_fw)
            w._accumulate(gw)
        if x.requires_grad:
            gx, _ = kernels.spmm_ve(bundle.gt, w.data[bundle.perm],
                                    DenseTensor(g), bundle.sched_bw, red)
            x._accumulate(gx.data)

    out._backward = bwd
    return out


def attention_scores(bundle: GraphBundle, s_l: Tensor, s_r: Tensor) -> Tensor:
    """Per-edge s_l[row] + s_r[col] via a two-feature SDDMM: [s_l|1].[1|s_r]."""
    dtype = _dtype_of(s_l)
    n = s_l.shape[0]
    ones = np.ones((n, 1), dtype=dtype)
    left = np.concatenate([s_l.data, ones], axis=1)
    right = np.concatenate([ones, s_r.data], axis=1)
    e, _ = kernels.sddmm(bundle.g, DenseTensor(left), DenseTensor(right),
                         bundle.sched_fw)
    out = Tensor(e, parents=(s_l, s_r))
    ones2 = np.ones((n, 2), dtype=dtype)

    def bwd(g):
        if s_l.requires_grad:
            gl, _ = kernels.spmm_ve(bundle.g, g, DenseTensor(ones2),
                                    bundle.sched_fw, Reduction("post", "none"))
            s_l._accumulate(gl.data[:, :1])
        if s_r.requires_grad:
            gr, _ = kernels.spmm_ve(bundle.gt, g[bundle.perm], DenseTensor(ones2),
                                    bundle.sched_bw, Reduction("post", "none"))
            s_r._accumulate(gr.data[:, :1])

    out._backward = bwd
    return out


def _row_tree_sum(values, rows, n, rnd):
    """Adjacent-pair tree sum of values grouped by (sorted) rows."""
    deg = np.bincount(rows, minlength=n)
    dmax = int(deg.max(initial=0))
    if dmax == 0:
        return np.zeros(n)
    offs = np.zeros(n, dtype=np.int64)
    np.cumsum(deg[:-1], out=offs[1:])
    pos = np.arange(dmax)
    idx = np.minimum(offs[:, None] + pos[None, :],
                     np.maximum(offs + deg - 1, 0)[:, None])
    valid = pos[None, :] < deg[:, None]
    padded = values[idx][..., None]
    total = _tree_merge(padded, valid, rnd)[:, 0]
    return np.where(deg > 0, total, 0.0)


def shadow_exp(x, overflow=None, tag="exp"):
    """exp on non-positive half/float inputs; output is always finite.

    Inputs above zero break the row-max-shift contract and raise.
    """
    if np.any(x > 0):
        raise ValueError("shadow_exp expects non-positive inputs")
    with np.errstate(invalid="ignore"):
        y = _round(np.exp(x.astype(np.float64)), x.dtype)
    if overflow is not None:
        overflow.observe(tag, y)
    return y


def shadow_div(num, den, overflow=None, tag="div"):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        y = _round(num.astype(np.float64) / den.astype(np.float64), num.dtype)
    if overflow is not None:
        overflow.observe(tag, y)
    return y


def edge_softmax(bundle: GraphBundle, e: Tensor, overflow=None, tag="softmax") -> Tensor:
    """Row-wise softmax over edge scores, entirely in the input mode.

    Forward: shift by the row max (shifted scores <= 0), shadow_exp, divide
    by the row's adjacent-pair tree sum. Backward: the exact softmax adjoint
    d_e = alpha * (d_alpha - rowsum(alpha * d_alpha)), same mode throughout.
    """
    dtype = _dtype_of(e)
    rnd = kernels._rounder(dtype)
    g = bundle.g
    rows = g.rows
    n = g.n

    rowmax = np.full(n, -np.inf)
    np.maximum.at(rowmax, rows, e.data.astype(np.float64))
    shifted = _round(e.data.astype(np.float64) - rowmax[rows], dtype)
    ex = shadow_exp(shifted, overflow, tag + "/exp")
    den = _row_tree_sum(ex.astype(np.float64), rows, n, rnd)
    alpha = shadow_div(ex, den[rows], overflow, tag + "/div")
    out = Tensor(alpha, parents=(e,))

    def bwd(gr):
        if not e.requires_grad:
            return
        prod = _round(alpha.astype(np.float64) * gr.astype(np.float64), dtype)
        s = _row_tree_sum(prod.astype(np.float64), rows, n, rnd)
        inner = _round(gr.astype(np.float64) - s[rows], dtype)
        e._accumulate(_round(alpha.astype(np.float64) * inner.astype(np.float64), dtype))

    out._backward = bwd
    return out


# ── Parameters and layers ───────────────────────────────────────────────


class Param:
    """Float32 master weight; publishes a leaf tensor in the compute mode."""

    def __init__(self, value):
        self.master = np.asarray(value, dtype=np.float32)
        self.published: Tensor | None = None

    def publish(self, mode) -> Tensor:
        data = self.master if mode == "float32" else to_half(self.master)
        self.published = Tensor(np.asarray(data), requires_grad=True)
        return self.published

    def grad32(self):
        if self.published is None or self.published.grad is None:
            return np.zeros_like(self.master)
        return self.published.grad.astype(np.float32)


def _glorot(rng, fan_in, fan_out, shape=None):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape or (fan_in, fan_out)).astype(np.float32)


class Linear:
    def __init__(self, rng, fan_in, fan_out, bias=True):
        self.w = Param(_glorot(rng, fan_in, fan_out))
        self.b = Param(np.zeros(fan_out, dtype=np.float32)) if bias else None

    def params(self):
        return [self.w] + ([self.b] if self.b is not None else [])

    def __call__(self, x: Tensor, mode) -> Tensor:
        out = matmul(x, self.w.publish(mode))
        if self.b is not None:
            out = add_bias(out, self.b.publish(mode))
        return out


class GCNLayer:
    """sigma(norm-aggregate(X W)); activation handled by the model."""

    def __init__(self, rng, fan_in, fan_out, reduction):
        self.lin = Linear(rng, fan_in, fan_out)
        self.reduction = reduction

    def params(self):
        return self.lin.params()

    def __call__(self, bundle, x, mode, width, overflow, tag):
        h = self.lin(x, mode)
        return spmm_agg(bundle, h, self.reduction, width, overflow, tag)


class GINLayer:
    """phi((1 + eps) x + lam * mean-aggregate(x)), eps learnable from 0."""

    def __init__(self, rng, fan_in, fan_out, lam=0.1, scaling="discretized"):
        if not 0.0 < lam <= 1.0:
            raise ValueError("lam must be in (0, 1]")
        self.lam = float(lam)
        self.reduction = Reduction(scaling, "right")
        self.one_plus_eps = Param(np.float32(1.0))
        self.phi1 = Linear(rng, fan_in, fan_out)
        self.phi2 = Linear(rng, fan_out, fan_out)

    def params(self):
        return [self.one_plus_eps] + self.phi1.params() + self.phi2.params()

    def __call__(self, bundle, x, mode, width, overflow, tag):
        agg = spmm_agg(bundle, x, self.reduction, width, overflow, tag)
        mixed = scale_combine(x, agg, self.one_plus_eps.publish(mode), self.lam)
        return self.phi2(relu(self.phi1(mixed, mode)), mode)


class GATLayer:
    """Single-head attention: scores by F=2 SDDMM, softmax, weighted SpMM."""

    def __init__(self, rng, fan_in, fan_out):
        self.lin = Linear(rng, fan_in, fan_out, bias=False)
        self.a_l = Param(_glorot(rng, fan_out, 1))
        self.a_r = Param(_glorot(rng, fan_out, 1))

    def params(self):
        return self.lin.params() + [self.a_l, self.a_r]

    def __call__(self, bundle, x, mode, width, overflow, tag):
        z = self.lin(x, mode)
        s_l = matmul(z, self.a_l.publish(mode))
        s_r = matmul(z, self.a_r.publish(mode))
        e = leaky_relu(attention_scores(bundle, s_l, s_r), 0.2)
        alpha = edge_softmax(bundle, e, overflow, tag + "/softmax")
        return spmm_weighted(bundle, alpha, z, width, overflow, tag)


_LAYER_KINDS = ("gcn", "gin", "gat")


class Model:
    """Two-layer stack of one kind with a ReLU between layers."""

    def __init__(self, kind, rng, dims, reduction=None, lam=0.1):
        if kind not in _LAYER_KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        fan_in, hidden, n_cls = dims
        red = reduction or Reduction("discretized", "both")
        if kind == "gcn":
            self.layers = [GCNLayer(rng, fan_in, hidden, red),
                           GCNLayer(rng, hidden, n_cls, red)]
        elif kind == "gin":
            self.layers = [GINLayer(rng, fan_in, hidden, lam, red.scaling),
                           GINLayer(rng, hidden, n_cls, lam, red.scaling)]
        else:
            self.layers = [GATLayer(rng, fan_in, hidden),
                           GATLayer(rng, hidden, n_cls)]

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def forward(self, bundle, x: Tensor, mode, width="half2", overflow=None):
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(bundle, h, mode, width, overflow, f"{self.kind}{i}")
            if i + 1 < len(self.layers):
                h = relu(h)
        return h


# ── Loss, optimizer, training loop ──────────────────────────────────────


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean CE on float32 logits; the gradient is the softmax residual."""
    if logits.mode != "float32":
        raise ValueError("cross-entropy expects float32 logits")
    with np.errstate(invalid="ignore", over="ignore"):
        z = logits.data.astype(np.float64)
        z = z - z.max(axis=1, keepdims=True)
        sumexp = np.exp(z).sum(axis=1)
        p = np.exp(z) / sumexp[:, None]
        n = z.shape[0]
        nll = np.log(sumexp) - z[np.arange(n), labels]
    out = Tensor(np.float32(nll.mean()).reshape(()), parents=(logits,))

    def bwd(g):
        if logits.requires_grad:
            grad = p.copy()
            grad[np.arange(n), labels] -= 1.0
            logits._accumulate((grad / n * float(g)).astype(np.float32))

    out._backward = bwd
    return out


class Adam:
    def __init__(self, params, lr=1e-2, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [np.zeros_like(p.master) for p in self.params]
        self.v = [np.zeros_like(p.master) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad32()
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p.master -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(np.float32)


@dataclass
class TrainConfig:
    kind: str = "gcn"
    mode: str = "half"
    epochs: int = 200
    hidden: int = 16
    lr: float = 1e-2
    seed: int = 0
    width: str = "half2"
    scaling: str = "discretized"
    norm: str = "both"
    lam: float = 0.1
    val_fraction: float = 0.2


@dataclass
class TrainResult:
    train_acc: float
    val_acc: float
    losses: list
    trace: list
    conversions: ConversionCounter
    overflow: OverflowCounters

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "train_acc", "val_acc", "inf_count", "nan_count"])
            w.writerows(self.trace)


def accuracy(logits, labels, mask):
    if not mask.any():
        return 0.0
    pred = logits[mask].argmax(axis=1)
    return float((pred == labels[mask]).mean())


def train(g: CooGraph, features, labels, config: TrainConfig) -> TrainResult:
    """Full-batch node classification; raises NanLossError on a NaN loss."""
    rng = np.random.default_rng(config.seed)
    n, fan_in = features.shape
    n_cls = int(labels.max()) + 1
    bundle = GraphBundle.build(g)
    red = Reduction(config.scaling, config.norm)
    model = Model(config.kind, rng, (fan_in, config.hidden, n_cls), red, config.lam)
    opt = Adam(model.params(), lr=config.lr)
    conversions = ConversionCounter()
    overflow = OverflowCounters()

    perm = rng.permutation(n)
    n_val = int(n * config.val_fraction)
    val_mask = np.zeros(n, dtype=bool)
    val_mask[perm[:n_val]] = True
    train_mask = ~val_mask

    dtype = _DTYPES[config.mode]
    x_data = features.astype(np.float32)
    if config.mode == "half":
        x_data = to_half(x_data)

    if config.epochs == 0:
        x = Tensor(x_data.astype(dtype))
        logits = model.forward(bundle, x, config.mode, config.width, overflow)
        if config.mode == "half":
            logits = convert(logits, "float32", conversions)
        train_acc = accuracy(logits.data, labels, train_mask)
        val_acc = accuracy(logits.data, labels, val_mask)
        return TrainResult(train_acc, val_acc, [], [], conversions, overflow)

    trace = []
    losses = []
    train_acc = val_acc = 0.0
    for epoch in range(config.epochs):
        overflow.reset()
        x = Tensor(x_data.astype(dtype))
        logits = model.forward(bundle, x, config.mode, config.width, overflow)
        if config.mode == "half":
            logits = convert(logits, "float32", conversions)
        loss = cross_entropy(logits, labels)
        if not np.isfinite(loss.data):
            raise NanLossError(epoch, overflow)
        loss.backward(np.float32(1.0))
        opt.step()
        train_acc = accuracy(logits.data, labels, train_mask)
        val_acc = accuracy(logits.data, labels, val_mask)
        n_inf, n_nan = overflow.totals()
        losses.append(float(loss.data))
        trace.append([epoch, float(loss.data), train_acc, val_acc, n_inf, n_nan])
    return TrainResult(train_acc, val_acc, losses, trace, conversions, overflow)
