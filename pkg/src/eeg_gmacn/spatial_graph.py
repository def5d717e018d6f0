"""Electrode adjacency from scalp geometry.

Two neighbour searches are supported:

* distance threshold: an edge ``i-j`` exists when ``d_ij < t`` and carries
  weight ``1 / (1 + d_ij / t)``, so kept weights lie in (0.5, 1];
* top-k: each electrode links to its ``k`` nearest others with weight
  ``1 / (1 + min(rank, k) / k)`` (rank is 1-based, self excluded, ties broken
  by montage order); the directed result is symmetrised with an element-wise
  max.

:func:`normalize` gives the GCN propagation matrix
``D^{-1/2} (E + I) D^{-1/2}`` with ``D`` the degree matrix of ``E + I``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .montage import Montage

__all__ = [
    "ElectrodeGraph",
    "pairwise_distances",
    "build_threshold",
    "build_topk",
    "normalize",
    "save_graph",
    "load_graph",
]


@dataclass(frozen=True)
class ElectrodeGraph:
    adjacency: np.ndarray
    strategy: str  # "threshold" or "topk"
    parameter: float
    montage_hash: str
    names: tuple = ()
    normalized: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise FormatError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise FormatError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0) or np.any(a < 0) or np.any(a > 1):
            raise FormatError("adjacency needs a zero diagonal and weights in [0, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        norm = normalize(a)
        norm.setflags(write=False)
        object.__setattr__(self, "normalized", norm)

    @property
    def size(self):
        return self.adjacency.shape[0]

    @property
    def degree(self):
        """Weighted degree of ``E`` (no self-loops)."""
        return self.adjacency.sum(axis=1)

    @property
    def tag(self):
        p = self.parameter
        p = int(p) if float(p).is_integer() else p
        return f"{self.strategy}{{{p}}}"

    def edge_count(self):
        return int(np.count_nonzero(np.triu(self.adjacency, 1)))

    def permuted(self, order):
        order = np.asarray(order)
        names = tuple(self.names[i] for i in order) if self.names else ()
        return ElectrodeGraph(
            self.adjacency[np.ix_(order, order)], self.strategy, self.parameter,
            self.montage_hash, names,
        )


def pairwise_distances(m: Montage) -> np.ndarray:
    p = m.positions
    diff = p[:, None, :] - p[None, :, :]
    d = np.sqrt((diff**2).sum(axis=-1))
    # exact symmetry regardless of rounding in the subtraction order
    d = np.triu(d, 1)
    return d + d.T


def build_threshold(m: Montage, t: float) -> ElectrodeGraph:
    if not t > 0:
        raise ParameterError(f"distance threshold must be > 0, got {t}")
    d = pairwise_distances(m)
    w = np.where(d < t, 1.0 / (1.0 + d / t), 0.0)
    np.fill_diagonal(w, 0.0)
    return ElectrodeGraph(w, "threshold", float(t), m.fingerprint(), m.names)


def build_topk(m: Montage, k: int) -> ElectrodeGraph:
    n = len(m)
    if int(k) != k or not 1 <= k <= n - 1:
        raise ParameterError(f"k must be an integer in [1, {n - 1}], got {k}")
    k = int(k)
    d = pairwise_distances(m)
    w = np.zeros((n, n))
    for i in range(n):
        others = np.array([j for j in range(n) if j != i])
        # stable sort: equal distances keep montage order
        ranked = others[np.argsort(d[i, others], kind="stable")]
        for rank, j in enumerate(ranked[:k], start=1):
            w[i, j] = 1.0 / (1.0 + min(rank, k) / k)
    w = np.maximum(w, w.T)
    return ElectrodeGraph(w, "topk", float(k), m.fingerprint(), m.names)


def normalize(g) -> np.ndarray:
    """Symmetric GCN propagation matrix for an adjacency (or graph)."""
    e = g.adjacency if isinstance(g, ElectrodeGraph) else np.asarray(g, dtype=np.float64)
    e_tilde = e + np.eye(e.shape[0])
    inv_sqrt = 1.0 / np.sqrt(e_tilde.sum(axis=1))
    out = inv_sqrt[:, None] * e_tilde * inv_sqrt[None, :]
    return (out + out.T) / 2.0


def save_graph(g: ElectrodeGraph, path) -> tuple[Path, Path]:
    """Write ``i,j,weight`` upper-triangle CSV plus a JSON sidecar."""
    path = Path(path)
    sidecar = path.with_suffix(".json")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "weight"])
        n = g.size
        for i in range(n):
            for j in range(i + 1, n):
                if g.adjacency[i, j] != 0:
                    w.writerow([i, j, repr(float(g.adjacency[i, j]))])
    meta = {
        "strategy": g.strategy,
        "parameter": g.parameter,
        "tag": g.tag,
        "nodes": g.size,
        "edges": g.edge_count(),
        "montage_hash": g.montage_hash,
        "names": list(g.names),
    }
    sidecar.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return path, sidecar


def load_graph(path) -> ElectrodeGraph:
    path = Path(path)
    sidecar = path.with_suffix(".json")
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        n = int(meta["nodes"])
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"{sidecar}: unreadable graph sidecar ({exc})") from None
    a = np.zeros((n, n))
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["i", "j", "weight"]:
            raise FormatError(f"{path}:1: expected header 'i,j,weight'")
        for lineno, rec in enumerate(reader, start=2):
            try:
                i, j, wt = int(rec[0]), int(rec[1]), float(rec[2])
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{lineno}: bad edge record {rec}") from None
            if not (0 <= i < n and 0 <= j < n):
                raise FormatError(f"{path}:{lineno}: node index out of range")
            a[i, j] = a[j, i] = wt
    return ElectrodeGraph(
        a, meta["strategy"], float(meta["parameter"]), meta["montage_hash"],
        tuple(meta.get("names", ())),
    )
