"""Electrode graphs on the built-in 64-channel montage.

Run: python3 demos/01_electrode_graphs.py
"""

# %%
import numpy as np

from eeg_gmacn.montage import builtin_64
from eeg_gmacn.spatial_graph import build_threshold, build_topk, pairwise_distances

montage = builtin_64()
print(montage.count, "electrodes, fingerprint", montage.fingerprint())

# %% how far apart are neighbours?
d = pairwise_distances(montage)
nearest = np.sort(d + np.eye(64) * 1e9, axis=1)[:, 0]
print(f"nearest-neighbour distance: min {nearest.min():.2f}, median {np.median(nearest):.2f}")

# %% distance-threshold graphs get denser as t grows
for t in (10, 20, 30):
    g = build_threshold(montage, t)
    deg = (g.adjacency > 0).sum(axis=1)
    print(f"{g.tag:14s} edges {g.edge_count():4d}  mean degree {deg.mean():5.2f}  "
          f"isolated {(deg == 0).sum()}")

# %% rank graphs: every electrode keeps its k nearest, then the pair set is symmetrized
for k in (3, 5, 7):
    g = build_topk(montage, k)
    deg = (g.adjacency > 0).sum(axis=1)
    print(f"{g.tag:14s} edges {g.edge_count():4d}  degree range {deg.min()}..{deg.max()}")

# %% the propagation matrix the GCN layers use
a_hat = build_threshold(montage, 20).normalized
cz = montage.index["Cz"]
row = a_hat[cz]
print("Cz mixes with:", [montage.names[j] for j in np.flatnonzero(row)])
print("row sum", row.sum().round(3), "symmetric:", np.array_equal(a_hat, a_hat.T))
