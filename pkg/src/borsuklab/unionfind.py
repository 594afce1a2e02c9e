import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class UnionFind:
    """Disjoint sets over ``0..n-1`` with union by size and path compression."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n
        self.n_components = n

    def __len__(self):
        return len(self.parent)

    def find(self, x):
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.n_components -= 1
        return True

    def union_edges(self, edges):
        for a, b in np.asarray(edges, dtype=np.int64).reshape(-1, 2).tolist():
            self.union(a, b)
        return self

    def labels(self):
        """Component label per element, numbered by first appearance."""
        roots = [self.find(i) for i in range(len(self.parent))]
        relabel = {}
        return np.array([relabel.setdefault(r, len(relabel)) for r in roots], dtype=np.int64)


def component_labels(n, edges):
    """Component labels of the graph on ``n`` vertices, numbered by first appearance.

    Bulk counterpart of :class:`UnionFind` used on the hot paths of the
    sweeps; the two are cross-checked in the test suite.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    A = coo_matrix((np.ones(len(edges), dtype=np.int8), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, raw = connected_components(A, directed=False)
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[raw]
