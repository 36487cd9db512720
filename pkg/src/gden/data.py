"""Plain-text dataset directory format: loader, writer, validation.

A dataset directory holds:

* ``meta.json`` with ``{"name", "n", "d", "c", "m"}``;
* ``edges.tsv`` (or ``edges_1.tsv`` .. ``edges_m.tsv`` when ``m > 1``),
  one undirected pair per line as ``i<TAB>j<TAB>weight``;
* ``features.tsv`` (one row of d reals per node) or
  ``features_sparse.tsv`` (``row<TAB>col<TAB>value`` triples);
* ``labels.tsv`` as ``node<TAB>class``; nodes absent from the file are
  unlabelled;
* ``train.idx`` / ``val.idx`` / ``test.idx``, one node index per line.

All files are UTF-8 with LF line endings.  Integers are written exactly;
reals use shortest round-trip decimal, so a write/load cycle is the
identity on every field.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph, build_graph, check_features


class DatasetError(Exception):
    """Raised for missing files, malformed lines, or inconsistent contents."""


@dataclass
class DatasetBundle:
    """In-memory dataset: graphs on a shared node set, features, labels, splits.

    labels uses -1 for unlabelled nodes.  Masks are sorted index arrays,
    pairwise disjoint, and may only contain labelled nodes.
    """

    name: str
    graphs: tuple
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    def __post_init__(self):
        if not self.graphs:
            raise DatasetError("bundle needs at least one graph")
        self.graphs = tuple(self.graphs)
        n = self.graphs[0].n
        for k, g in enumerate(self.graphs):
            if not isinstance(g, Graph):
                raise DatasetError(f"graphs[{k}] is not a Graph")
            if g.n != n:
                raise DatasetError(f"graphs[{k}] has {g.n} nodes, expected {n}")
        try:
            self.features = check_features(self.features, n=n, name="features")
        except ValueError as exc:
            raise DatasetError(str(exc)) from None
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if labels.shape != (n,):
            raise DatasetError(f"labels must have length {n}, got {labels.shape}")
        if self.num_classes < 1:
            raise DatasetError(f"num_classes must be >= 1, got {self.num_classes}")
        if labels.min(initial=0) < -1 or labels.max(initial=-1) >= self.num_classes:
            raise DatasetError(
                f"labels must lie in [-1, {self.num_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        self.labels = labels
        masks = []
        seen = np.zeros(n, dtype=bool)
        for mask_name in ("train_mask", "val_mask", "test_mask"):
            m = np.unique(np.asarray(getattr(self, mask_name), dtype=np.int64).ravel())
            if m.size and (m[0] < 0 or m[-1] >= n):
                raise DatasetError(f"{mask_name} index out of range [0, {n})")
            if np.any(seen[m]):
                raise DatasetError(f"{mask_name} overlaps another mask")
            seen[m] = True
            if np.any(labels[m] < 0):
                bad = m[labels[m] < 0][0]
                raise DatasetError(f"{mask_name} contains unlabelled node {bad}")
            masks.append(m)
        self.train_mask, self.val_mask, self.test_mask = masks

    @property
    def n(self):
        return self.graphs[0].n

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def m(self):
        return len(self.graphs)

    @property
    def graph(self):
        """The sole graph; errors if the bundle is multi-graph."""
        if len(self.graphs) != 1:
            raise DatasetError(f"bundle has {len(self.graphs)} graphs, not 1")
        return self.graphs[0]

    def label_rate(self):
        return self.train_mask.size / self.n

    def summary(self):
        return {
            "name": self.name,
            "n": self.n,
            "d": self.d,
            "c": self.num_classes,
            "m": self.m,
            "undirected_edges": [g.num_undirected_edges() for g in self.graphs],
            "labelled": int(np.sum(self.labels >= 0)),
            "train": int(self.train_mask.size),
            "val": int(self.val_mask.size),
            "test": int(self.test_mask.size),
            "label_rate": self.label_rate(),
        }


def _require(directory, filename):
    path = os.path.join(directory, filename)
    if not os.path.isfile(path):
        raise DatasetError(f"missing file: {path}")
    return path


def _parse_int(token, path, lineno, what):
    try:
        return int(token)
    except ValueError:
        raise DatasetError(f"{path}:{lineno}: bad {what} {token!r}") from None


def _parse_float(token, path, lineno, what):
    try:
        return float(token)
    except ValueError:
        raise DatasetError(f"{path}:{lineno}: bad {what} {token!r}") from None


def _read_edge_file(path, n):
    triples = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetError(
                    f"{path}:{lineno}: expected 'i<TAB>j<TAB>weight', got {line!r}"
                )
            i = _parse_int(parts[0], path, lineno, "node index")
            j = _parse_int(parts[1], path, lineno, "node index")
            w = _parse_float(parts[2], path, lineno, "edge weight")
            if not 0 <= i < n or not 0 <= j < n:
                raise DatasetError(f"{path}:{lineno}: edge ({i}, {j}) out of range [0, {n})")
            triples.append((i, j, w))
    return triples


def _read_dense_features(path, n, d):
    rows = np.empty((n, d))
    with open(path, "r", encoding="utf-8") as f:
        count = 0
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if count >= n:
                raise DatasetError(f"{path}:{lineno}: more than {n} feature rows")
            parts = line.split("\t")
            if len(parts) != d:
                raise DatasetError(f"{path}:{lineno}: expected {d} values, got {len(parts)}")
            try:
                rows[count] = np.array(parts, dtype=np.float64)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric feature value") from None
            count += 1
    if count != n:
        raise DatasetError(f"{path}: expected {n} feature rows, got {count}")
    return rows


def _read_sparse_features(path, n, d):
    X = np.zeros((n, d))
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetError(
                    f"{path}:{lineno}: expected 'row<TAB>col<TAB>value', got {line!r}"
                )
            i = _parse_int(parts[0], path, lineno, "row index")
            j = _parse_int(parts[1], path, lineno, "column index")
            v = _parse_float(parts[2], path, lineno, "feature value")
            if not 0 <= i < n:
                raise DatasetError(f"{path}:{lineno}: row {i} out of range [0, {n})")
            if not 0 <= j < d:
                raise DatasetError(f"{path}:{lineno}: column {j} out of range [0, {d})")
            X[i, j] = v
    return X


def _read_labels(path, n, c):
    labels = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected 'node<TAB>class', got {line!r}")
            i = _parse_int(parts[0], path, lineno, "node index")
            y = _parse_int(parts[1], path, lineno, "class index")
            if not 0 <= i < n:
                raise DatasetError(f"{path}:{lineno}: node {i} out of range [0, {n})")
            if not 0 <= y < c:
                raise DatasetError(f"{path}:{lineno}: class {y} out of range [0, {c})")
            if seen[i]:
                raise DatasetError(f"{path}:{lineno}: duplicate label for node {i}")
            seen[i] = True
            labels[i] = y
    return labels


def _read_mask(path, n):
    idx = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            i = _parse_int(line, path, lineno, "node index")
            if not 0 <= i < n:
                raise DatasetError(f"{path}:{lineno}: index {i} out of range [0, {n})")
            idx.append(i)
    return np.array(sorted(idx), dtype=np.int64)


def load_dataset(directory, row_normalize=False):
    """Load a dataset directory into a DatasetBundle.

    Edges are symmetrized and repeated pairs are merged by summing their
    weights.  With ``row_normalize`` each feature row is scaled to unit
    L1 norm (all-zero rows stay zero); the flag is off by default and
    changes only the returned features, never the files.
    """
    meta_path = _require(directory, "meta.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{meta_path}: invalid JSON ({exc})") from None
    for key in ("name", "n", "d", "c", "m"):
        if key not in meta:
            raise DatasetError(f"{meta_path}: missing key {key!r}")
    name = str(meta["name"])
    try:
        n, d, c, m = (int(meta[k]) for k in ("n", "d", "c", "m"))
    except (TypeError, ValueError):
        raise DatasetError(f"{meta_path}: n, d, c, m must be integers") from None
    if n < 1 or d < 1 or c < 1 or m < 1:
        raise DatasetError(f"{meta_path}: n, d, c, m must be positive")

    if m == 1:
        edge_files = [_require(directory, "edges.tsv")]
    else:
        edge_files = [_require(directory, f"edges_{k}.tsv") for k in range(1, m + 1)]
    graphs = tuple(
        build_graph(n, _read_edge_file(p, n), symmetrize=True) for p in edge_files
    )

    dense_path = os.path.join(directory, "features.tsv")
    sparse_path = os.path.join(directory, "features_sparse.tsv")
    if os.path.isfile(dense_path):
        X = _read_dense_features(dense_path, n, d)
    elif os.path.isfile(sparse_path):
        X = _read_sparse_features(sparse_path, n, d)
    else:
        raise DatasetError(f"missing file: {dense_path} (or features_sparse.tsv)")
    if row_normalize:
        X = row_normalize_features(X)

    labels = _read_labels(_require(directory, "labels.tsv"), n, c)
    masks = {part: _read_mask(_require(directory, part + ".idx"), n)
             for part in ("train", "val", "test")}
    return DatasetBundle(
        name=name,
        graphs=graphs,
        features=X,
        labels=labels,
        num_classes=c,
        train_mask=masks["train"],
        val_mask=masks["val"],
        test_mask=masks["test"],
    )


def row_normalize_features(X):
    """Scale each row to unit L1 norm; all-zero rows are left untouched."""
    X = np.array(X, dtype=np.float64, copy=True)
    norms = np.abs(X).sum(axis=1)
    nz = norms > 0
    X[nz] /= norms[nz, None]
    return X


def write_dataset(bundle, directory):
    """Write a bundle to ``directory``, creating it if needed.

    Inverse of load_dataset: a load of the written directory reproduces
    the bundle field for field.  The feature matrix goes to the sparse
    triple file when that is the smaller encoding, else to the dense one.
    """
    os.makedirs(directory, exist_ok=True)
    meta = {
        "name": bundle.name,
        "n": bundle.n,
        "d": bundle.d,
        "c": bundle.num_classes,
        "m": bundle.m,
    }
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")

    names = ["edges.tsv"] if bundle.m == 1 else [
        f"edges_{k}.tsv" for k in range(1, bundle.m + 1)
    ]
    for g, fname in zip(bundle.graphs, names):
        write_edge_file(g, os.path.join(directory, fname))

    write_features(bundle.features, directory)

    with open(os.path.join(directory, "labels.tsv"), "w", encoding="utf-8") as f:
        for i in np.flatnonzero(bundle.labels >= 0):
            f.write(f"{i}\t{bundle.labels[i]}\n")

    for mask, fname in (
        (bundle.train_mask, "train.idx"),
        (bundle.val_mask, "val.idx"),
        (bundle.test_mask, "test.idx"),
    ):
        with open(os.path.join(directory, fname), "w", encoding="utf-8") as f:
            for i in mask:
                f.write(f"{i}\n")


def write_edge_file(g, path):
    ii, jj, ww = g.edge_pairs()
    with open(path, "w", encoding="utf-8") as f:
        for i, j, w in zip(ii, jj, ww):
            f.write(f"{i}\t{j}\t{float(w)!r}\n")


def write_features(X, directory):
    """Write X as features.tsv or features_sparse.tsv, whichever is smaller.

    The sparse form wins when triple lines (3 numbers each) need fewer
    numbers than the dense grid.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    nnz = int(np.count_nonzero(X))
    if 3 * nnz < n * d:
        rows, cols = np.nonzero(X)
        with open(os.path.join(directory, "features_sparse.tsv"), "w", encoding="utf-8") as f:
            for i, j in zip(rows, cols):
                f.write(f"{i}\t{j}\t{float(X[i, j])!r}\n")
    else:
        write_dense_features(X, os.path.join(directory, "features.tsv"))


def write_dense_features(X, path):
    """Write a matrix as one tab-separated row of reals per line."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    with open(path, "w", encoding="utf-8") as f:
        for row in X:
            f.write("\t".join(repr(float(v)) for v in row) + "\n")
