"""Sparse undirected graph container and the raw linear maps built on it.

Everything downstream (diffusion operators, network layers) touches the
graph only through :func:`operator_apply`, which multiplies feature
matrices by one of four maps without ever forming an n x n dense matrix:

* ``laplacian``       L = D - A          (symmetric)
* ``norm_adjacency``  S = D^-1/2 A D^-1/2 (symmetric)
* ``transition``      P = A D^-1         (column-stochastic)
* ``adjacency``       A                  (symmetric)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

OPERATOR_KINDS = ("laplacian", "norm_adjacency", "transition", "adjacency")


@dataclass(frozen=True)
class Graph:
    """Immutable weighted undirected graph.

    Attributes
    ----------
    n : int
        Number of nodes.
    adj : scipy.sparse.csr_matrix
        Symmetric nonnegative adjacency of shape (n, n).  Never mutated
        after construction.
    degrees : numpy.ndarray
        Cached weighted degrees, ``degrees[i] = adj[i].sum()``.
    """

    n: int
    adj: sp.csr_matrix
    degrees: np.ndarray

    def recompute_degrees(self):
        """Row sums of the stored adjacency (for consistency checks)."""
        return np.asarray(self.adj.sum(axis=1)).ravel()

    def num_undirected_edges(self):
        """Number of stored undirected pairs; a self-loop counts once."""
        upper = sp.triu(self.adj, k=0)
        return int(upper.nnz)

    def edge_pairs(self):
        """Return (i, j, w) arrays over unique pairs with i <= j."""
        upper = sp.triu(self.adj, k=0).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]

    def dense_adjacency(self):
        """Densify the adjacency.  Caller is responsible for size guards."""
        return self.adj.toarray()

    def has_zero_degree(self):
        return bool(np.any(self.degrees == 0.0))


def build_graph(n, edge_list, symmetrize=True):
    """Build an undirected graph from an edge list.

    Parameters
    ----------
    n : int
        Node count, must be >= 1.
    edge_list : iterable of (i, j, weight)
        Endpoints in [0, n), weight > 0.  Duplicate pairs are summed.
        Entries with i == j become self-loops (added once).
    symmetrize : bool
        If True each (i, j, w) with i != j contributes w to both A_ij and
        A_ji.  If False the entries are taken literally and the resulting
        matrix must already be symmetric.
    """
    if n < 1:
        raise ValueError("graph must have at least one node (n >= 1)")
    rows, cols, vals = [], [], []
    for k, (i, j, w) in enumerate(edge_list):
        i, j, w = int(i), int(j), float(w)
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge {k}: endpoint ({i}, {j}) out of range for n={n}")
        if not w > 0:
            raise ValueError(f"edge {k}: weight must be positive, got {w}")
        rows.append(i)
        cols.append(j)
        vals.append(w)
        if symmetrize and i != j:
            rows.append(j)
            cols.append(i)
            vals.append(w)
    adj = sp.coo_matrix(
        (np.asarray(vals, dtype=np.float64), (rows, cols)), shape=(n, n)
    ).tocsr()
    adj.sum_duplicates()
    if not symmetrize and (adj != adj.T).nnz != 0:
        raise ValueError("edge list is not symmetric and symmetrize is off")
    degrees = np.asarray(adj.sum(axis=1)).ravel()
    return Graph(n=n, adj=adj, degrees=degrees)


def add_self_loops(g, weight=1.0, only_isolated=False):
    """Return a new graph with ``weight`` added to selected diagonal entries.

    With ``only_isolated`` the loop is added only to zero-degree nodes,
    which is the standard repair before using degree-inverse operators.
    """
    if not weight > 0:
        raise ValueError(f"self-loop weight must be positive, got {weight}")
    if only_isolated:
        selected = np.flatnonzero(g.degrees == 0.0)
    else:
        selected = np.arange(g.n)
    if selected.size == 0:
        return g
    bump = sp.coo_matrix(
        (np.full(selected.size, float(weight)), (selected, selected)),
        shape=(g.n, g.n),
    )
    adj = (g.adj + bump).tocsr()
    degrees = np.asarray(adj.sum(axis=1)).ravel()
    return Graph(n=g.n, adj=adj, degrees=degrees)


def _as_2d(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        return M[:, None], True
    if M.ndim != 2:
        raise ValueError(f"feature matrix must be 1-D or 2-D, got ndim={M.ndim}")
    return M, False


def operator_apply(g, kind, M, transpose=False):
    """Multiply a feature matrix by one of the graph operators.

    ``laplacian``, ``norm_adjacency`` and ``adjacency`` are symmetric, so
    ``transpose`` is a no-op for them; for ``transition`` the transpose
    applies D^-1 A.  Raises on zero-degree nodes for the two kinds that
    invert degrees.
    """
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}, expected one of {OPERATOR_KINDS}")
    M, was_1d = _as_2d(M)
    if M.shape[0] != g.n:
        raise ValueError(f"feature matrix has {M.shape[0]} rows, graph has {g.n} nodes")
    if kind in ("norm_adjacency", "transition") and g.has_zero_degree():
        raise ValueError(
            f"{kind} operator undefined with zero-degree nodes; "
            "call add_self_loops first or drop isolated nodes"
        )
    if kind == "laplacian":
        out = g.degrees[:, None] * M - g.adj @ M
    elif kind == "adjacency":
        out = g.adj @ M
    elif kind == "norm_adjacency":
        inv_sqrt = 1.0 / np.sqrt(g.degrees)
        out = inv_sqrt[:, None] * (g.adj @ (inv_sqrt[:, None] * M))
    else:  # transition: P = A D^-1, so P^T = D^-1 A
        if transpose:
            out = (g.adj @ M) / g.degrees[:, None]
        else:
            out = g.adj @ (M / g.degrees[:, None])
    return out[:, 0] if was_1d else out


def check_features(X, n=None, name="feature matrix"):
    """Validate a dense feature matrix: 2-D, finite, optionally n rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    if n is not None and X.shape[0] != n:
        raise ValueError(f"{name} has {X.shape[0]} rows, expected {n}")
    return X
