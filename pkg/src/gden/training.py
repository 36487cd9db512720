"""Optimization loop, evaluation metrics and edge splits for link prediction.

The training recipe mirrors the standard citation-network pipeline: Adam,
weight decay on the first projection only, dropout, and early stopping on
the validation metric (accuracy for classification, AUC for link
prediction).  Runs are bit-reproducible for a fixed seed and thread
count: the only random state is a generator owned by the loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .graphs import Graph, build_graph
from .network import (
    ModelParams,
    forward_gae,
    forward_semi,
    init_params,
    loss_and_grad_gae,
    loss_and_grad_semi,
    masked_cross_entropy,
)


@dataclass
class TrainConfig:
    """Hyperparameters of a training run.

    weight_decay applies to the first-layer weights only.  learning_rate
    zero is accepted (it makes a run a no-op, which the test-suite relies
    on to pin down optimizer correctness).
    """

    epochs: int = 200
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float


@dataclass
class TrainHistory:
    """Per-epoch metric trace plus the early-stopping outcome."""

    records: list = field(default_factory=list)
    chosen_epoch: int = -1
    final_test_metric: float = float("nan")

    def val_metrics(self):
        return [r.val_metric for r in self.records]

    def __len__(self):
        return len(self.records)


METRICS_HEADER = "epoch\ttrain_loss\tval_loss\tval_metric"


def write_metrics(history, path):
    """Serialize the per-epoch trace as tab-separated lines.

    First line is the column header; one row per epoch with floats in
    shortest round-trip decimal form.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(METRICS_HEADER + "\n")
        for r in history.records:
            f.write(
                f"{r.epoch}\t{float(r.train_loss)!r}\t{float(r.val_loss)!r}"
                f"\t{float(r.val_metric)!r}\n"
            )


def read_metrics(path):
    records = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected metrics header {header!r}")
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            records.append(
                EpochRecord(int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]))
            )
    return records


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int
    m: list
    v: list


def init_adam(params):
    return AdamState(
        step=0,
        m=[np.zeros_like(W) for W in params.weights],
        v=[np.zeros_like(W) for W in params.weights],
    )


def adam_step(params, grads, state, config, decay_indices=(0,)):
    """One Adam update with bias correction; returns (params', state').

    Weight decay is added to the gradients of the matrices listed in
    ``decay_indices`` before the moment update.
    """
    t = state.step + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    new_weights, new_m, new_v = [], [], []
    for k, (W, g) in enumerate(zip(params.weights, grads)):
        if config.weight_decay > 0 and k in decay_indices:
            g = g + config.weight_decay * W
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * (g * g)
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_weights.append(W - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return (
        ModelParams(params.layer_dims, new_weights, params.seed),
        AdamState(step=t, m=new_m, v=new_v),
    )


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def evaluate_accuracy(M, labels, mask):
    """Fraction of masked nodes whose argmax prediction is correct.

    Ties in a probability row resolve to the lowest class index.
    """
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValueError("mask must be non-empty")
    labels = np.asarray(labels)
    pred = np.argmax(M[mask], axis=1)
    return float(np.mean(pred == labels[mask]))


def auc(scores, labels):
    """Probability that a random positive outranks a random negative.

    Ties count one half (rank-based Mann-Whitney form).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def one_hot(labels, num_classes):
    """One-hot rows for known labels; all-zero rows where the label is < 0."""
    labels = np.asarray(labels, dtype=np.int64).ravel()
    Y = np.zeros((labels.size, num_classes))
    known = labels >= 0
    Y[np.flatnonzero(known), labels[known]] = 1.0
    return Y


# ---------------------------------------------------------------------------
# Edge splits for link prediction
# ---------------------------------------------------------------------------

@dataclass
class EdgeSplit:
    """Disjoint positive edge sets plus sampled negatives.

    Edge arrays have shape (k, 2) with i < j; train_weights aligns with
    train_edges.  Self-loops never participate in a split.
    """

    train_edges: np.ndarray
    train_weights: np.ndarray
    val_edges: np.ndarray
    test_edges: np.ndarray
    val_nonedges: np.ndarray
    test_nonedges: np.ndarray

    def train_graph(self, n):
        triples = [
            (int(i), int(j), float(w))
            for (i, j), w in zip(self.train_edges, self.train_weights)
        ]
        return build_graph(n, triples, symmetrize=True)


def split_edges(g, val_frac, test_frac, seed):
    """Random undirected-edge split with matched negative samples.

    Deterministic in the seed.  Negatives are uniform over non-adjacent
    node pairs (self-pairs excluded); sampling gives up after a bounded
    number of rejections when the graph is too dense.
    """
    if val_frac < 0 or test_frac < 0 or val_frac + test_frac >= 1:
        raise ValueError(f"need 0 <= val_frac + test_frac < 1, got {val_frac}+{test_frac}")
    ii, jj, ww = g.edge_pairs()
    off_diag = ii != jj
    ii, jj, ww = ii[off_diag], jj[off_diag], ww[off_diag]
    n_edges = ii.size
    if n_edges < 10:
        raise ValueError(f"need at least 10 undirected edges to split, got {n_edges}")
    n_val = int(round(val_frac * n_edges))
    n_test = int(round(test_frac * n_edges))
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_edges)
    val_idx = order[:n_val]
    test_idx = order[n_val:n_val + n_test]
    train_idx = np.sort(order[n_val + n_test:])
    if train_idx.size == 0:
        raise ValueError("split leaves no training edges")

    pairs = np.stack([ii, jj], axis=1)
    adjacent = set(map(tuple, pairs))
    chosen = set()
    need = n_val + n_test
    negatives = []
    max_tries = 200 * max(need, 1)
    tries = 0
    while len(negatives) < need:
        if tries >= max_tries:
            raise ValueError(
                f"could not sample {need} non-edges after {max_tries} tries; graph too dense"
            )
        tries += 1
        a, b = rng.integers(0, g.n, size=2)
        if a == b:
            continue
        pair = (int(min(a, b)), int(max(a, b)))
        if pair in adjacent or pair in chosen:
            continue
        chosen.add(pair)
        negatives.append(pair)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(need, 2)
    return EdgeSplit(
        train_edges=pairs[train_idx],
        train_weights=ww[train_idx],
        val_edges=pairs[np.sort(val_idx)],
        test_edges=pairs[np.sort(test_idx)],
        val_nonedges=negatives[:n_val],
        test_nonedges=negatives[n_val:],
    )


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------

def _improved(metric, loss, best_metric, best_loss):
    # Higher metric wins; at equal metric a lower validation loss counts
    # as progress so plateaus of the quantized metric do not stop the run.
    return metric > best_metric or (metric == best_metric and loss < best_loss)


def train_semi(bundle, op, arch, config, head_diffusion=True):
    """Train the classification model; returns (best params, history).

    ``arch`` lists the hidden layer widths (e.g. ``[16]``).  Model
    selection is by validation accuracy with early stopping after
    ``config.patience`` epochs without improvement; the returned
    parameters come from the best-validation epoch.
    """
    X = bundle.features
    c = bundle.num_classes
    layer_dims = [X.shape[1], *[int(h) for h in arch], c]
    params = init_params(layer_dims, config.seed)
    Y = one_hot(bundle.labels, c)
    rng = np.random.default_rng(config.seed)
    state = init_adam(params)
    diffused_X = op.diffuse(X)

    history = TrainHistory()
    best_params = params.copy()
    best_epoch = -1
    best_metric = -np.inf
    best_loss = np.inf
    since_improved = 0
    for epoch in range(config.epochs):
        train_loss, grads = loss_and_grad_semi(
            params, op, X, Y, bundle.train_mask, head_diffusion=head_diffusion,
            dropout=config.dropout, rng=rng, diffused_input=diffused_X,
        )
        params, state = adam_step(params, grads, state, config)
        M, _ = forward_semi(
            params, op, X, head_diffusion=head_diffusion, diffused_input=diffused_X
        )
        val_loss = masked_cross_entropy(M, Y, bundle.val_mask)
        val_acc = evaluate_accuracy(M, bundle.labels, bundle.val_mask)
        history.records.append(EpochRecord(epoch, train_loss, val_loss, val_acc))
        if _improved(val_acc, val_loss, best_metric, best_loss):
            best_metric, best_loss, best_epoch = val_acc, val_loss, epoch
            best_params = params.copy()
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= config.patience:
                break
    M, _ = forward_semi(
        best_params, op, X, head_diffusion=head_diffusion, diffused_input=diffused_X
    )
    history.chosen_epoch = best_epoch
    history.final_test_metric = evaluate_accuracy(M, bundle.labels, bundle.test_mask)
    return best_params, history


def _pair_scores(A_hat, pairs):
    return A_hat[pairs[:, 0], pairs[:, 1]]


def train_gae(bundle, op, arch, config, split):
    """Train the auto-encoder on the training edges of ``split``.

    The caller must build ``op`` on the train-edge subgraph; the
    reconstruction target here is that same subgraph.  Validation metric
    is AUC over the split's validation positives and non-edges; the test
    AUC of the best epoch lands in ``history.final_test_metric``.
    """
    X = bundle.features
    n = bundle.n
    layer_dims = [X.shape[1], *[int(h) for h in arch]]
    if len(layer_dims) < 2:
        raise ValueError("auto-encoder needs at least one propagation layer")
    params = init_params(layer_dims, config.seed)
    rng = np.random.default_rng(config.seed)
    state = init_adam(params)
    g_train = split.train_graph(n)
    target = g_train.dense_adjacency()
    if op.n != n:
        raise ValueError(f"operator node count {op.n} does not match dataset n={n}")
    diffused_X = op.diffuse(X)

    val_pairs = np.concatenate([split.val_edges, split.val_nonedges])
    val_labels = np.concatenate(
        [np.ones(len(split.val_edges)), np.zeros(len(split.val_nonedges))]
    )
    test_pairs = np.concatenate([split.test_edges, split.test_nonedges])
    test_labels = np.concatenate(
        [np.ones(len(split.test_edges)), np.zeros(len(split.test_nonedges))]
    )

    history = TrainHistory()
    best_params = params.copy()
    best_epoch = -1
    best_metric = -np.inf
    best_loss = np.inf
    since_improved = 0
    for epoch in range(config.epochs):
        train_loss, grads = loss_and_grad_gae(
            params, op, X, target, dropout=config.dropout, rng=rng,
            diffused_input=diffused_X,
        )
        params, state = adam_step(params, grads, state, config)
        A_hat, _ = forward_gae(params, op, X, diffused_input=diffused_X)
        diff = A_hat - target
        val_loss = float(np.sum(diff * diff))
        val_auc = auc(_pair_scores(A_hat, val_pairs), val_labels)
        history.records.append(EpochRecord(epoch, train_loss, val_loss, val_auc))
        if _improved(val_auc, val_loss, best_metric, best_loss):
            best_metric, best_loss, best_epoch = val_auc, val_loss, epoch
            best_params = params.copy()
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= config.patience:
                break
    A_hat, _ = forward_gae(best_params, op, X, diffused_input=diffused_X)
    history.chosen_epoch = best_epoch
    history.final_test_metric = auc(_pair_scores(A_hat, test_pairs), test_labels)
    return best_params, history
