"""Decode the distributed citation-network files and write the plain-text format.

The upstream distribution ships eight Python-pickled files per dataset
(``ind.<name>.x / .y / .tx / .ty / .allx / .ally / .graph`` plus the
plain-text ``ind.<name>.test.index``):

* ``allx``  sparse features of every non-test node, node order;
* ``tx``    sparse features of the test nodes, in test-index-file order;
* ``x``     the labelled training block (first rows of ``allx``);
* ``ally`` / ``ty`` / ``y``  matching one-hot label blocks;
* ``graph`` adjacency as ``{node: [neighbor, ...]}`` with both directions;
* ``test.index``  one test node id per line, permuted.

Conversion reassembles the full feature matrix in node order, derives
integer labels (all-zero one-hot rows become unknown), rebuilds the
undirected graph without self-citations, and applies the standard split:
the first ``len(y)`` nodes train, the next 500 validate, the index-file
nodes test.  Citeseer's index file skips some ids inside the test range;
the skipped nodes get zero feature rows and stay unlabelled and unmasked.
"""

from __future__ import annotations

import os
import pickle
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

import gden

DATASET_NAMES = ("cora", "citeseer", "pubmed")

PICKLED_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")

# node / edge / class / feature counts the three datasets are documented
# to have; used only for the warn-level edge check in reports
DOCUMENTED_EDGES = {"cora": 5429, "citeseer": 4732, "pubmed": 44338}

VALIDATION_SIZE = 500


class ConvertError(Exception):
    """Missing or undecodable source files, or inconsistent contents."""


@dataclass
class PlanetoidSource:
    """The eight decoded per-dataset files."""

    name: str
    x: sp.spmatrix
    y: np.ndarray
    tx: sp.spmatrix
    ty: np.ndarray
    allx: sp.spmatrix
    ally: np.ndarray
    graph: dict
    test_index: np.ndarray


@dataclass
class ConvertReport:
    """What was written: dimensions, edge count and split sizes."""

    name: str
    n: int
    d: int
    c: int
    undirected_edges: int
    train: int
    val: int
    test: int

    def as_text(self):
        return "\n".join(
            f"{key}={getattr(self, key)}"
            for key in ("name", "n", "d", "c", "undirected_edges",
                        "train", "val", "test")
        )


def _source_path(src_dir, name, part):
    return os.path.join(src_dir, f"ind.{name}.{part}")


def read_planetoid(src_dir, name):
    """Decode the eight source files into a PlanetoidSource."""
    if name not in DATASET_NAMES:
        raise ConvertError(
            f"unknown dataset name {name!r}; expected one of {', '.join(DATASET_NAMES)}"
        )
    parts = {}
    for part in PICKLED_PARTS:
        path = _source_path(src_dir, name, part)
        if not os.path.isfile(path):
            raise ConvertError(f"missing file: {path}")
        try:
            with open(path, "rb") as f:
                # latin1 lets pickles written by Python 2 deserialize
                parts[part] = pickle.load(f, encoding="latin1")
        except Exception as exc:
            raise ConvertError(f"{path}: cannot decode ({exc})") from None

    index_path = _source_path(src_dir, name, "test.index")
    if not os.path.isfile(index_path):
        raise ConvertError(f"missing file: {index_path}")
    try:
        with open(index_path, "r", encoding="utf-8") as f:
            test_index = np.array(
                [int(line) for line in f if line.strip()], dtype=np.int64
            )
    except ValueError as exc:
        raise ConvertError(f"{index_path}: {exc}") from None
    if test_index.size == 0:
        raise ConvertError(f"{index_path}: no test indices")
    if np.unique(test_index).size != test_index.size:
        raise ConvertError(f"{index_path}: repeated test index")

    return PlanetoidSource(name=name, test_index=test_index, **parts)


def _as_dense(M, what):
    if sp.issparse(M):
        return np.asarray(M.todense(), dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ConvertError(f"{what} is not a matrix")
    return M


def assemble_bundle(source):
    """Turn decoded source files into a validated DatasetBundle."""
    allx = _as_dense(source.allx, "allx")
    tx = _as_dense(source.tx, "tx")
    ally = np.asarray(source.ally, dtype=np.float64)
    ty = np.asarray(source.ty, dtype=np.float64)
    y = np.asarray(source.y, dtype=np.float64)

    if allx.shape[1] != tx.shape[1]:
        raise ConvertError(
            f"feature width mismatch: allx has {allx.shape[1]}, tx has {tx.shape[1]}"
        )
    if ally.shape[0] != allx.shape[0] or ty.shape[0] != tx.shape[0]:
        raise ConvertError("label blocks do not align with feature blocks")
    if ally.shape[1] != ty.shape[1]:
        raise ConvertError("label width mismatch between ally and ty")
    if source.x.shape[0] != y.shape[0]:
        raise ConvertError("x and y disagree on the training-block size")

    test_index = source.test_index
    span_start = int(test_index.min())
    span = int(test_index.max()) - span_start + 1
    if span_start != allx.shape[0]:
        raise ConvertError(
            f"test indices start at {span_start}, but allx has {allx.shape[0]} rows"
        )
    if test_index.size != tx.shape[0]:
        raise ConvertError(
            f"test.index lists {test_index.size} nodes, tx has {tx.shape[0]} rows"
        )

    n = span_start + span
    d = allx.shape[1]
    c = ally.shape[1]

    # test rows arrive in index-file order; place each at its node id.
    # Ids missing from the index file (the Citeseer quirk) keep zero rows.
    X = np.zeros((n, d))
    X[:span_start] = allx
    Y = np.zeros((n, c))
    Y[:span_start] = ally
    X[test_index] = tx
    Y[test_index] = ty

    labels = np.where(Y.sum(axis=1) > 0, Y.argmax(axis=1), -1).astype(np.int64)

    train_size = y.shape[0]
    if train_size + VALIDATION_SIZE > span_start:
        raise ConvertError(
            f"need {train_size + VALIDATION_SIZE} non-test nodes for the "
            f"train and validation blocks, have {span_start}"
        )

    pairs = set()
    for i, neighbors in source.graph.items():
        i = int(i)
        if not 0 <= i < n:
            raise ConvertError(f"adjacency node {i} out of range [0, {n})")
        for j in neighbors:
            j = int(j)
            if not 0 <= j < n:
                raise ConvertError(f"adjacency neighbor {j} out of range [0, {n})")
            if i != j:  # drop self-citations
                pairs.add((min(i, j), max(i, j)))
    g = gden.build_graph(n, [(i, j, 1.0) for i, j in sorted(pairs)])

    return gden.DatasetBundle(
        name=source.name,
        graphs=(g,),
        features=X,
        labels=labels,
        num_classes=c,
        train_mask=np.arange(train_size, dtype=np.int64),
        val_mask=np.arange(train_size, train_size + VALIDATION_SIZE, dtype=np.int64),
        test_mask=np.sort(test_index),
    )


def convert_planetoid(src_dir, name, out_dir, row_normalize=False):
    """Convert one dataset and write it under ``out_dir``; returns the report.

    With ``row_normalize`` the written feature rows are scaled to unit L1
    norm (the form the citation-network experiments consume).
    """
    source = read_planetoid(src_dir, name)
    bundle = assemble_bundle(source)
    if row_normalize:
        bundle = gden.DatasetBundle(
            bundle.name, bundle.graphs,
            gden.row_normalize_features(bundle.features),
            bundle.labels, bundle.num_classes,
            bundle.train_mask, bundle.val_mask, bundle.test_mask,
        )
    gden.write_dataset(bundle, out_dir)
    return ConvertReport(
        name=bundle.name,
        n=bundle.n,
        d=bundle.d,
        c=bundle.num_classes,
        undirected_edges=bundle.graph.num_undirected_edges(),
        train=int(bundle.train_mask.size),
        val=int(bundle.val_mask.size),
        test=int(bundle.test_mask.size),
    )
