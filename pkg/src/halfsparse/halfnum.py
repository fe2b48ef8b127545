"""Software binary16 arithmetic and packed half vectors.

Scalar/elementwise ops follow IEEE 754 binary16: round-to-nearest-even,
gradual underflow (subnormals, no flush-to-zero), overflow to +/-INF, NaN
propagation. `half_fma` is a fused multiply-add with a single rounding. All
ops accept numpy float16 scalars or arrays and are elementwise over arrays.

The wide-value route is float64: a binary16 product is exact in 53 bits and
the remaining double rounding (float64 then float16) is innocuous at this
precision gap, so every op here is single-rounding correct.

Packed words Half2/Half4/Half8 model 4/8/16-byte vector registers. Half4 and
Half8 are stacks of Half2 lanes and all their arithmetic decomposes into
per-Half2-lane calls; there is no hidden wider accumulation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

HALF_MAX = 65504.0
HALF_MIN_NORMAL = 2.0**-14
HALF_MIN_SUBNORMAL = 2.0**-24
HALF_EPS = 2.0**-10  # ulp at 1.0

# Lane counts for the supported load/compute widths.
WIDTH_LANES = {"half": 1, "half2": 2, "half4": 4, "half8": 8}


def _rne_f16_bits(wide):
    """binary16 bit patterns of a 1-D float64 array, one RNE rounding each.

    Integer arithmetic only; the rounding ground truth for `to_half` and the
    fallback when the platform cast fails the hazard probe.
    """
    bits = wide.view(np.uint64)
    sign = ((bits >> np.uint64(48)) & np.uint64(0x8000)).astype(np.uint16)
    expf = ((bits >> np.uint64(52)) & np.uint64(0x7FF)).astype(np.int64)
    frac = bits & np.uint64((1 << 52) - 1)
    sig = frac | np.uint64(1 << 52)
    unbiased = expf - 1023

    # Normal results (exponents clipped so shift counts stay in range; the
    # masks at the end pick which path each element actually takes).
    base = (sig >> np.uint64(42)).astype(np.int64)
    low = sig & np.uint64((1 << 42) - 1)
    tie = np.uint64(1 << 41)
    up = (low > tie) | ((low == tie) & ((base & 1) == 1))
    nval = ((np.clip(unbiased, -14, 15) + 15) << 10) + (base - 1024) + up
    nval = np.minimum(nval, 0x7C00)

    # Subnormal results, exponents -25..-15 (below -25 rounds to zero).
    sshift = (28 - np.clip(unbiased, -25, -15)).astype(np.uint64)
    sbase = (sig >> sshift).astype(np.int64)
    slow = sig & ((np.uint64(1) << sshift) - np.uint64(1))
    stie = np.uint64(1) << (sshift - np.uint64(1))
    sup = (slow > stie) | ((slow == stie) & ((sbase & 1) == 1))
    sval = sbase + sup

    val = np.zeros(wide.shape, dtype=np.int64)
    val = np.where((unbiased >= -25) & (unbiased <= -15) & (expf > 0), sval, val)
    val = np.where((unbiased >= -14) & (unbiased <= 15), nval, val)
    val = np.where((unbiased >= 16) & (expf < 0x7FF), 0x7C00, val)
    val = np.where(expf == 0x7FF, np.where(frac != 0, 0x7E00, 0x7C00), val)
    return sign | val.astype(np.uint16)


_PLATFORM_CAST_OK = None

_HAZARD_EXPONENTS = (-14, -10, -1, 0, 4, 10, 11, 15)


def _hazard_battery(dtype):
    """Values adjacent to binary16 rounding decisions, in dtype precision.

    Ties at even and odd mantissas across binades, one-ulp near-ties, inputs
    that collapse onto a tie when pre-rounded to float32 (the double-rounding
    trap), subnormal ties, and the overflow midpoint.
    """
    mags = []
    for e in _HAZARD_EXPONENTS:
        ulp = 2.0 ** (e - 10)
        base = 2.0 ** e
        for m in (0, 1, 2, 3, 511, 512, 1021, 1022, 1023):
            mid = base + m * ulp + ulp / 2.0
            mags += [
                mid,
                np.nextafter(dtype(mid), dtype(0.0)),
                np.nextafter(dtype(mid), dtype(np.inf)),
                mid - base * 2.0**-30,
                mid + base * 2.0**-30,
            ]
    for k in (0, 1, 2, 3, 511, 1023):
        mid = (2.0 * k + 1.0) * 2.0**-25
        mags += [
            mid,
            np.nextafter(dtype(mid), dtype(0.0)),
            np.nextafter(dtype(mid), dtype(np.inf)),
        ]
    mags += [
        65504.0,
        65519.0,
        65520.0,
        np.nextafter(dtype(65520.0), dtype(np.inf)),
        65536.0,
        2.0**-26,
        0.0,
    ]
    arr = np.array(mags, dtype=dtype)
    return np.concatenate([arr, -arr])


def _cast_matches(vals):
    tiled = np.tile(vals, 48)
    views = [vals, tiled]
    views += [tiled[:n] for n in (1, 2, 3, 5, 8, 9, 16, 17, 31, 32, 33, 64, 65)]
    views += [tiled[1:], tiled[3:], tiled[::2], tiled[1::2], tiled[::3]]
    for v in views:
        want = _rne_f16_bits(np.ascontiguousarray(v, dtype=np.float64).reshape(-1))
        with np.errstate(over="ignore"):
            got = v.astype(np.float16).view(np.uint16)
        if not np.array_equal(got.reshape(-1), want):
            return False
    return True


def _platform_cast_ok():
    """One-time probe of the platform float-to-half casts.

    Every semantic rounding in the package funnels through this cast, so its
    tie behavior is verified against `_rne_f16_bits` rather than assumed,
    through the contiguous, tail, offset, and strided cast loops a SIMD
    build dispatches separately.
    """
    global _PLATFORM_CAST_OK
    if _PLATFORM_CAST_OK is None:
        _PLATFORM_CAST_OK = all(
            _cast_matches(_hazard_battery(dt)) for dt in (np.float64, np.float32)
        )
        if not _PLATFORM_CAST_OK:
            warnings.warn(
                "platform float16 casts break ties inconsistently; "
                "falling back to software rounding",
                RuntimeWarning,
                stacklevel=3,
            )
    return _PLATFORM_CAST_OK


def to_half(x):
    """Round wide values to binary16 (RNE, overflow to INF, keeps subnormals).

    The platform cast is used only after it passes the hazard probe; on
    failure every value rounds through integer arithmetic instead, so
    results are bit-identical on every host.
    """
    a = np.asarray(x)
    if a.dtype == np.float16:
        return a.copy()
    if _platform_cast_ok():
        with np.errstate(over="ignore"):
            if a.dtype == np.float64 or a.dtype == np.float32:
                return a.astype(np.float16)
            return a.astype(np.float64).astype(np.float16)
    wide = np.ascontiguousarray(a, dtype=np.float64)
    return _rne_f16_bits(wide.reshape(-1)).view(np.float16).reshape(a.shape)


def to_wide(h):
    """Exact widening of binary16 values to float64."""
    return np.asarray(h).astype(np.float64)


def half_bits(h):
    """Bit patterns of binary16 values as uint16."""
    return np.asarray(h, dtype=np.float16).view(np.uint16)


def from_bits(bits):
    """Binary16 values from uint16 bit patterns."""
    return np.asarray(bits, dtype=np.uint16).view(np.float16)


def _wide(x):
    a = np.asarray(x)
    if a.dtype != np.float16:
        raise TypeError(f"expected float16 operand, got {a.dtype}")
    return a.astype(np.float64)


def half_add(a, b):
    """a + b with one binary16 rounding."""
    with np.errstate(invalid="ignore"):
        return to_half(_wide(a) + _wide(b))


def half_sub(a, b):
    """a - b with one binary16 rounding."""
    with np.errstate(invalid="ignore"):
        return to_half(_wide(a) - _wide(b))


def half_mul(a, b):
    """a * b with one binary16 rounding (the float64 product is exact)."""
    with np.errstate(invalid="ignore"):
        return to_half(_wide(a) * _wide(b))


def half_div(a, b):
    """a / b with one binary16 rounding."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return to_half(_wide(a) / _wide(b))


def half_fma(a, b, c):
    """Fused a*b + c with a single binary16 rounding.

    Distinguishable from mul-then-add: the product is never rounded to
    binary16 on its own, so sticky low bits survive into the sum.
    """
    with np.errstate(invalid="ignore"):
        return to_half(_wide(a) * _wide(b) + _wide(c))


# ── Packed vector words ─────────────────────────────────────────────────


def _as_lanes(values, n):
    arr = np.asarray(values, dtype=np.float16).reshape(-1)
    if arr.size != n:
        raise ValueError(f"expected {n} lanes, got {arr.size}")
    return arr


@dataclass(frozen=True)
class Half2:
    """Two binary16 lanes in a 4-byte word."""

    lanes: np.ndarray

    def __init__(self, lanes):
        object.__setattr__(self, "lanes", _as_lanes(lanes, 2))

    @property
    def lo(self):
        return self.lanes[0]

    @property
    def hi(self):
        return self.lanes[1]

    @property
    def nbytes(self):
        return 2 * self.lanes.itemsize

    def to_bytes(self):
        return self.lanes.astype("<f2").tobytes()

    @classmethod
    def from_bytes(cls, raw):
        return cls(np.frombuffer(raw, dtype="<f2", count=2))

    def add(self, other):
        return Half2(half_add(self.lanes, other.lanes))

    def mul(self, other):
        return Half2(half_mul(self.lanes, other.lanes))

    def fma(self, other, acc):
        return Half2(half_fma(self.lanes, other.lanes, acc.lanes))


class _WideWord:
    """Shared behavior for the 2- and 4-Half2 words."""

    _n_half2 = 0

    def __init__(self, lanes):
        self.lanes = _as_lanes(lanes, 2 * self._n_half2)

    @property
    def half2_lanes(self):
        """The word decomposed into its Half2 building blocks."""
        return tuple(
            Half2(self.lanes[2 * i : 2 * i + 2]) for i in range(self._n_half2)
        )

    @property
    def nbytes(self):
        return self.lanes.size * self.lanes.itemsize

    def to_bytes(self):
        return self.lanes.astype("<f2").tobytes()

    @classmethod
    def from_bytes(cls, raw):
        return cls(np.frombuffer(raw, dtype="<f2", count=2 * cls._n_half2))

    @classmethod
    def _from_half2s(cls, parts):
        return cls(np.concatenate([p.lanes for p in parts]))

    # Arithmetic is per-Half2-lane by construction.
    def add(self, other):
        pairs = zip(self.half2_lanes, other.half2_lanes)
        return self._from_half2s([a.add(b) for a, b in pairs])

    def mul(self, other):
        pairs = zip(self.half2_lanes, other.half2_lanes)
        return self._from_half2s([a.mul(b) for a, b in pairs])

    def fma(self, other, acc):
        triples = zip(self.half2_lanes, other.half2_lanes, acc.half2_lanes)
        return self._from_half2s([a.fma(b, c) for a, b, c in triples])


class Half4(_WideWord):
    """Four binary16 lanes (two Half2 words) in 8 bytes."""

    _n_half2 = 2


class Half8(_WideWord):
    """Eight binary16 lanes (four Half2 words) in 16 bytes."""

    _n_half2 = 4


def mirror_edge_feature(w: Half2) -> tuple[Half2, Half2]:
    """Duplicate each lane of an edge-feature pair into its own Half2.

    A packed pair {wa, wb} becomes ({wa, wa}, {wb, wb}) so each edge's
    scalar weight can multiply a two-feature word lane-wise.
    """
    return Half2([w.lo, w.lo]), Half2([w.hi, w.hi])
