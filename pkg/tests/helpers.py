"""Shared generators and independent dense oracles.

Every reference value here is produced by explicit dense linear algebra
(np.linalg.solve over materialized matrices), never by the library's own
solver path, so the two can disagree.
"""

import numpy as np

import gden

# Tight solver settings so oracle comparisons are limited by the math,
# not by iteration noise.
TIGHT = gden.SolverConfig(tolerance=1e-12)

ALL_KINDS = (
    gden.DiffusionKind.LAPLACIAN_REG,
    gden.DiffusionKind.RWR,
    gden.DiffusionKind.NORMALIZED_LAPLACIAN,
    gden.DiffusionKind.MULTI_LAPLACIAN,
)

DEFAULT_ALPHA = {
    gden.DiffusionKind.LAPLACIAN_REG: 4.5,
    gden.DiffusionKind.RWR: 0.91,
    gden.DiffusionKind.NORMALIZED_LAPLACIAN: 0.65,
    gden.DiffusionKind.MULTI_LAPLACIAN: 4.5,
}


def rand_graph(rng, n, weighted=True, extra_frac=0.8):
    """Connected random graph on n nodes; every degree is positive."""
    order = rng.permutation(n)
    edges = []
    for a, b in zip(order[:-1], order[1:]):
        w = float(rng.uniform(0.5, 2.0)) if weighted else 1.0
        edges.append((int(a), int(b), w))
    for _ in range(int(extra_frac * n)):
        i, j = (int(v) for v in rng.integers(0, n, size=2))
        if i == j:
            continue
        w = float(rng.uniform(0.5, 2.0)) if weighted else 1.0
        edges.append((i, j, w))
    return gden.build_graph(n, edges)


def dense_laplacian(g):
    return np.diag(g.degrees) - g.dense_adjacency()


def dense_norm_adjacency(g):
    dis = 1.0 / np.sqrt(g.degrees)
    return g.dense_adjacency() * dis[:, None] * dis[None, :]


def dense_transition(g):
    # A D^{-1}: scale column j by 1/degree_j
    return g.dense_adjacency() / g.degrees[None, :]


def dense_diffuse(kind, graphs, alpha, variant, X):
    """Reference closed form via explicit dense solve."""
    if isinstance(graphs, gden.Graph):
        graphs = [graphs]
    kind = gden.DiffusionKind(kind)
    g0 = graphs[0]
    eye = np.eye(g0.n)
    if kind in (gden.DiffusionKind.LAPLACIAN_REG, gden.DiffusionKind.MULTI_LAPLACIAN):
        lap = sum(dense_laplacian(g) for g in graphs)
        mat = eye + alpha * lap if variant == "paper" else alpha * eye + lap
        return alpha * np.linalg.solve(mat, X)
    if kind == gden.DiffusionKind.RWR:
        return (1 - alpha) * np.linalg.solve(eye - alpha * dense_transition(g0), X)
    pref = alpha if variant == "paper" else 1 - alpha
    return pref * np.linalg.solve(eye - alpha * dense_norm_adjacency(g0), X)


def diffusion_objective(g, alpha, X, Z):
    """(1/2) sum_ij A_ij ||Z_i - Z_j||^2 + alpha ||Z - X||_F^2."""
    A = g.dense_adjacency()
    sq = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
    return 0.5 * float((A * sq).sum()) + alpha * float(((Z - X) ** 2).sum())


def identity_operator(n, d_unused=None):
    """LaplacianReg on the empty graph with alpha = 1: diffuse(X) = X."""
    return gden.make_diffusion(
        "laplacian_reg", gden.build_graph(n, []), 1.0, solver_cfg=TIGHT
    )


def sbm_two_block(seed, n=100, p_in=0.25, p_out=0.01):
    """Two equal blocks; returns (graph, block labels)."""
    rng = np.random.default_rng(seed)
    half = n // 2
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            p = p_in if (i < half) == (j < half) else p_out
            if rng.random() < p:
                edges.append((i, j, 1.0))
    labels = (np.arange(n) >= half).astype(np.int64)
    return gden.build_graph(n, edges), labels


def two_cluster_bundle(seed=0, per_cluster=10, noise=0.1):
    """Two disconnected cliques with well-separated features.

    2 labelled nodes per class, 4 validation, the rest test; a correctly
    wired pipeline classifies the test nodes perfectly.
    """
    rng = np.random.default_rng(seed)
    n = 2 * per_cluster
    edges = []
    for blk in range(2):
        base = blk * per_cluster
        for i in range(per_cluster):
            for j in range(i + 1, per_cluster):
                edges.append((base + i, base + j, 1.0))
    labels = np.repeat(np.arange(2), per_cluster)
    centers = np.array([[2.0, 0.0], [0.0, 2.0]])
    X = centers[labels] + noise * rng.normal(size=(n, 2))
    train = [0, 1, per_cluster, per_cluster + 1]
    val = [2, 3, per_cluster + 2, per_cluster + 3]
    test = [i for i in range(n) if i not in train + val]
    return gden.DatasetBundle(
        "two-cluster", (gden.build_graph(n, edges),), X, labels, 2, train, val, test
    )


def random_bundle(rng, n=30, d=4, c=3):
    """Arbitrary labelled bundle for round-trip and plumbing tests."""
    g = rand_graph(rng, n)
    X = rng.normal(size=(n, d))
    labels = rng.integers(0, c, size=n).astype(np.int64)
    labels[rng.choice(n, size=n // 5, replace=False)] = -1
    known = np.flatnonzero(labels >= 0)
    rng.shuffle(known)
    k = known.size
    return gden.DatasetBundle(
        "random", (g,), X, labels, c,
        known[: k // 3], known[k // 3: 2 * k // 3], known[2 * k // 3:],
    )


def fd_gradient(loss_fn, params, step=1e-5):
    """Central finite differences of loss_fn over every weight entry."""
    grads = []
    for k, W in enumerate(params.weights):
        G = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            plus = [w.copy() for w in params.weights]
            plus[k][idx] += step
            minus = [w.copy() for w in params.weights]
            minus[k][idx] -= step
            lp = loss_fn(gden.ModelParams(params.layer_dims, plus, params.seed))
            lm = loss_fn(gden.ModelParams(params.layer_dims, minus, params.seed))
            G[idx] = (lp - lm) / (2 * step)
        grads.append(G)
    return grads


def max_rel_err(analytic, numeric, floor=1e-8):
    worst = 0.0
    for A, N in zip(analytic, numeric):
        denom = np.maximum(np.abs(N), floor)
        worst = max(worst, float(np.max(np.abs(A - N) / denom)))
    return worst
