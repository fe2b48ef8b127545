"""
Resolving conflicting row writes without atomics
================================================

In the vertex-grouped kernel a row with more than 32 neighbors spans
several groups, and every group produces a partial for the same output
row. The staging protocol gives each conflicting group a private carry
slot, then a follow-up pass folds the slots in ascending group order. The
atomic model serializes the same merges as atomic updates. Both perform
the identical sequence of rounded additions, so the outputs match bit for
bit; only the conflict counters differ.
"""

import numpy as np

from halfsparse import (
    CooGraph,
    DenseTensor,
    coo_to_csr,
    spmm_vertex_grouped,
)

# One 70-neighbor row: its CSR slots split into groups of 32 + 32 + 6.
g = CooGraph(80, np.zeros(70, dtype=np.int64), np.arange(1, 71, dtype=np.int64))
csr = coo_to_csr(g)
x = DenseTensor(np.ones((80, 8), dtype=np.float16))

y_stage, m_stage, staging = spmm_vertex_grouped(
    csr, x, write_mode="staging", return_staging=True
)
y_atomic, m_atomic = spmm_vertex_grouped(csr, x, write_mode="atomic_model")

print("staging:      staging_writes =", m_stage.staging_writes,
      " atomic_writes =", m_stage.atomic_writes)
print("atomic model: staging_writes =", m_atomic.staging_writes,
      " atomic_writes =", m_atomic.atomic_writes)

# The staging buffer is inspectable: one slot per conflicting group, each
# holding the destination row and the group's already-scaled partial.
print("\nstaging slots (row, first channel):")
for i in range(staging.capacity):
    print(f"  slot {i}: row {staging.rows[i]}, partial {staging.partials[i, 0]}")

same = np.array_equal(y_stage.data.view(np.uint16), y_atomic.data.view(np.uint16))
print("\noutputs bit-identical:", same)
print("row 0 aggregate:", y_stage.data[0, 0], "(70 unit neighbors)")
