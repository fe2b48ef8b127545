"""
Packed vector widths and the exact cost model
=============================================

Every kernel runs with a declared vector width (half, half2, half4,
half8) and reports exact counts from the schedule: memory transactions,
bytes, barrier waits, reduction rounds. The numeric result is identical
across widths; only the counted traffic changes.
"""

import numpy as np

from halfsparse import CooGraph, DenseTensor, sddmm, spmm_v

rng = np.random.default_rng(0)
mask = rng.random((256, 256)) < 0.05
np.fill_diagonal(mask, False)
g = CooGraph.from_edges(256, *np.nonzero(mask))
x = DenseTensor(rng.normal(size=(256, 32)).astype(np.float16))
print(f"graph: {g.n} vertices, {g.num_edges} edges, 32 features\n")

# SpMM at each width. A full warp load moves 64 bytes per lane pair, so
# the coalesced transaction grows from 64 B (half) to 512 B (half8) and
# the transaction count falls.
header = f"{'width':8} {'transactions':>12} {'bytes':>10} {'bytes/load':>10}"
print(header)
baseline = None
for width in ("half", "half2", "half4", "half8"):
    y, m = spmm_v(g, x, width=width)
    if baseline is None:
        baseline = y.data.copy()
    assert np.array_equal(y.data, baseline)  # width never changes values
    print(f"{width:8} {m.load_transactions:12d} {m.load_bytes:10d} "
          f"{m.coalesced_bytes_per_warp_load:10d}")

# SDDMM reduces each edge's dot product across the threads of a sub-warp.
# Wider words mean fewer partials per edge, so fewer shuffle rounds: at 32
# features, half2 leaves 16 partials (4 rounds) and half8 leaves 4
# partials (2 rounds).
print()
for width in ("half2", "half8"):
    w, m = sddmm(g, x, x, width=width)
    print(f"sddmm {width:6} shuffle rounds per edge: "
          f"{m.shuffle_rounds // g.num_edges}")
