"""
Where the reduction scales decides whether half overflows
=========================================================

A high-degree vertex aggregating large neighbor values is the classic
half-precision failure: the raw running sum crosses 65504 long before the
final mean would. The three scaling strategies place the same degree
factor at different points of the reduction, and only the placement
differs.
"""

import numpy as np

from halfsparse import CooGraph, DenseTensor, Reduction, spmm_v

# A star: one hub vertex draws from 1024 spokes, every spoke holds 30000.
# The true mean is 30000, comfortably inside half range. The raw sum is
# 30.7 million, far outside it.
n = 1025
g = CooGraph(n, np.zeros(n - 1, dtype=np.int64), np.arange(1, n, dtype=np.int64))
x = DenseTensor(np.full((n, 32), 30000.0, dtype=np.float16))

# post: accumulate raw, divide at the end. The sum saturates to INF on the
# third edge and no final division can undo that.
y, _ = spmm_v(g, x, reduction=Reduction("post", "right"))
print("post-scaling hub value:        ", float(y.data[0, 0]))

# pre: scale every edge's contribution by 1/1024 at load. Each addend is
# tiny, so the sum stays in range, at the cost of one extra rounding per
# edge and lost low bits when addends underflow.
# Exact decimals throughout: a bare numpy half prints the shortest decimal
# that parses back to the same half, which can sit several units away from
# the value the bits actually hold.
y, _ = spmm_v(g, x, reduction=Reduction("pre", "right"))
print("pre-scaling hub value:         ", float(y.data[0, 0]))

# discretized: accumulate short raw batches (one warp iteration each),
# fold every batch through the factor into the running row partial. The
# raw window is at most a few edges wide, so it cannot run away, and the
# factor is applied to batch sums rather than single edges, so fewer low
# bits are lost.
y, _ = spmm_v(g, x, reduction=Reduction("discretized", "right"))
print("discretized-scaling hub value: ", float(y.data[0, 0]))

# The exact answer is 30000. Discretized lands within 0.32% after 512
# batch folds; post is unusable, having overflowed mid-chain.
