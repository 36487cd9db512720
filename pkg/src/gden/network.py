"""Stacked diffusion-embedding layers and the two task heads.

A model is a chain of propagation layers

    X^(k) = ReLU( H(A, X^(k-1)) W^(k) )

followed by either a softmax classification head (which diffuses once
more before the final projection, switchable via ``head_diffusion``) or
an inner-product decoder sigma(Z Z^T) for graph auto-encoding.  There are
no bias terms.  Gradients are exact reverse-mode derivatives computed by
hand; the diffusion adjoint is supplied by
:meth:`DiffusionOperator.diffuse_transpose`.

Dropout, when enabled, masks the input of every projection (i.e. the
diffused features right before the weight multiply), with inverted
scaling at train time.  Masking after the diffusion rather than before it
keeps the first-layer diffusion a constant that can be computed once per
training run.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .diffusion import DiffusionKind, DiffusionOperator
from .graphs import Graph, check_features

CHECKPOINT_MAGIC = b"GDEN1\n"

DEFAULT_GAE_NODE_CAP = 10000


@dataclass
class ModelParams:
    """Projection matrices of a model.

    ``layer_dims`` chains input dim, hidden dims and the final output
    dim; ``weights[k]`` has shape (layer_dims[k], layer_dims[k+1]).  For
    the classification head the last matrix is the head projection; for
    the auto-encoder every matrix belongs to a propagation layer.
    """

    layer_dims: tuple
    weights: list = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ValueError(
                f"{len(self.layer_dims)} dims require {len(self.layer_dims) - 1} "
                f"weight matrices, got {len(self.weights)}"
            )
        for k, W in enumerate(self.weights):
            expect = (self.layer_dims[k], self.layer_dims[k + 1])
            if W.shape != expect:
                raise ValueError(f"weight {k} has shape {W.shape}, expected {expect}")
            if not np.all(np.isfinite(W)):
                raise ValueError(f"weight {k} contains non-finite entries")

    def copy(self):
        return ModelParams(self.layer_dims, [W.copy() for W in self.weights], self.seed)


@dataclass
class ForwardCache:
    """Intermediates kept by a forward pass for the matching backward pass."""

    inputs: list        # post-dropout input of each projection
    activations: list   # post-ReLU output of each propagation layer
    masks: list         # scaled dropout masks (None entries when disabled)
    probs: np.ndarray | None = None   # softmax output (classification head)
    scores: np.ndarray | None = None  # sigmoid(Z Z^T) (auto-encoder head)


def init_params(layer_dims, seed=0):
    """Glorot-uniform initialization, deterministic in the seed."""
    layer_dims = [int(d) for d in layer_dims]
    if len(layer_dims) < 2:
        raise ValueError("need at least an input and an output dimension")
    if any(d < 1 for d in layer_dims):
        raise ValueError(f"all dims must be >= 1, got {layer_dims}")
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    return ModelParams(tuple(layer_dims), weights, int(seed))


def _dropout_mask(shape, rate, rng):
    if rate <= 0.0:
        return None
    if rng is None:
        raise ValueError("dropout requires an explicit random generator")
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(np.float64) / keep


def _check_layer_finite(M, layer_index):
    if not np.all(np.isfinite(M)):
        raise FloatingPointError(f"non-finite values produced at layer {layer_index}")


def _softmax_rows(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def _propagate(params, op, X, num_layers, dropout, rng, diffused_input):
    """Run ``num_layers`` propagation layers, returning output and cache lists."""
    inputs, activations, masks = [], [], []
    h = X
    for k in range(num_layers):
        if k == 0 and diffused_input is not None:
            U = np.asarray(diffused_input, dtype=np.float64)
        else:
            U = op.diffuse(h)
        mask = _dropout_mask(U.shape, dropout, rng)
        if mask is not None:
            U = U * mask
        A = np.maximum(U @ params.weights[k], 0.0)
        _check_layer_finite(A, k + 1)
        inputs.append(U)
        masks.append(mask)
        activations.append(A)
        h = A
    return h, inputs, activations, masks


def _backprop_layers(params, op, d_out, inputs, activations, masks):
    """Gradient of the propagation stack given d(loss)/d(last activation)."""
    grads = [None] * len(inputs)
    dh = d_out
    for k in range(len(inputs) - 1, -1, -1):
        dZ = dh * (activations[k] > 0.0)
        grads[k] = inputs[k].T @ dZ
        if k > 0:
            dU = dZ @ params.weights[k].T
            if masks[k] is not None:
                dU = dU * masks[k]
            dh = op.diffuse_transpose(dU)
    return grads


def forward_semi(params, op, X, head_diffusion=True, dropout=0.0, rng=None,
                 diffused_input=None):
    """Forward pass of the classification model.

    Returns the row-stochastic probability matrix M (n x c) and the cache
    needed by :func:`loss_and_grad_semi`.  ``diffused_input`` may carry a
    precomputed ``op.diffuse(X)`` (it is constant across a training run).
    """
    X = check_features(X, op.n)
    n_hidden = len(params.weights) - 1
    if params.layer_dims[0] != X.shape[1]:
        raise ValueError(f"input dim {X.shape[1]} does not match layer_dims[0]={params.layer_dims[0]}")
    if n_hidden == 0 and diffused_input is not None and head_diffusion:
        h, inputs, activations, masks = X, [], [], []
        V = np.asarray(diffused_input, dtype=np.float64)
    else:
        h, inputs, activations, masks = _propagate(
            params, op, X, n_hidden, dropout, rng, diffused_input
        )
        V = op.diffuse(h) if head_diffusion else h
    head_mask = _dropout_mask(V.shape, dropout, rng)
    if head_mask is not None:
        V = V * head_mask
    logits = V @ params.weights[-1]
    _check_layer_finite(logits, n_hidden + 1)
    M = _softmax_rows(logits)
    cache = ForwardCache(
        inputs=inputs + [V], activations=activations, masks=masks + [head_mask], probs=M
    )
    return M, cache


def _check_mask(mask, n):
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValueError("mask of labelled nodes must be non-empty")
    if mask.min() < 0 or mask.max() >= n:
        raise ValueError(f"mask index out of range for n={n}")
    return mask


def masked_cross_entropy(M, Y, mask):
    """- sum over masked rows of sum_j Y_ij ln M_ij."""
    mask = _check_mask(mask, M.shape[0])
    return float(-(Y[mask] * np.log(M[mask])).sum())


def loss_and_grad_semi(params, op, X, Y, mask, head_diffusion=True, dropout=0.0,
                       rng=None, diffused_input=None):
    """Cross-entropy loss over labelled nodes and exact parameter gradients.

    Y is one-hot (n x c); mask indexes the labelled rows.  Unmasked rows
    contribute neither loss nor gradient.
    """
    mask = _check_mask(mask, op.n)
    M, cache = forward_semi(
        params, op, X, head_diffusion=head_diffusion, dropout=dropout, rng=rng,
        diffused_input=diffused_input,
    )
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != M.shape:
        raise ValueError(f"one-hot labels have shape {Y.shape}, expected {M.shape}")
    loss = masked_cross_entropy(M, Y, mask)
    dlogits = np.zeros_like(M)
    dlogits[mask] = M[mask] - Y[mask]
    V = cache.inputs[-1]
    grads = [None] * len(params.weights)
    grads[-1] = V.T @ dlogits
    if len(params.weights) > 1:
        dV = dlogits @ params.weights[-1].T
        if cache.masks[-1] is not None:
            dV = dV * cache.masks[-1]
        d_hidden = op.diffuse_transpose(dV) if head_diffusion else dV
        grads[:-1] = _backprop_layers(
            params, op, d_hidden, cache.inputs[:-1], cache.activations, cache.masks[:-1]
        )
    return loss, grads


def forward_gae(params, op, X, dropout=0.0, rng=None, diffused_input=None,
                node_cap=DEFAULT_GAE_NODE_CAP):
    """Auto-encoder forward pass: sigmoid(Z Z^T) over the final embedding.

    The last layer produces Z = diffuse(h) W linearly; rectifying it would
    pin every score at or above one half and stall training, so only the
    hidden layers carry ReLU.  Materializes an n x n score matrix,
    guarded by ``node_cap``.
    """
    X = check_features(X, op.n)
    if op.n > node_cap:
        raise ValueError(f"n={op.n} exceeds the auto-encoder node cap {node_cap}")
    n_hidden = len(params.weights) - 1
    h, inputs, activations, masks = _propagate(
        params, op, X, n_hidden, dropout, rng, diffused_input
    )
    if n_hidden == 0 and diffused_input is not None:
        U = np.asarray(diffused_input, dtype=np.float64)
    else:
        U = op.diffuse(h)
    out_mask = _dropout_mask(U.shape, dropout, rng)
    if out_mask is not None:
        U = U * out_mask
    Z = U @ params.weights[-1]
    _check_layer_finite(Z, len(params.weights))
    A_hat = expit(Z @ Z.T)
    cache = ForwardCache(
        inputs=inputs + [U],
        activations=activations + [Z],
        masks=masks + [out_mask],
        scores=A_hat,
    )
    return A_hat, cache


def loss_and_grad_gae(params, op, X, target, dropout=0.0, rng=None,
                      diffused_input=None, node_cap=DEFAULT_GAE_NODE_CAP):
    """Squared Frobenius reconstruction loss against a target graph."""
    if isinstance(target, Graph):
        A = target.dense_adjacency()
    else:
        A = np.asarray(target, dtype=np.float64)
    if A.shape != (op.n, op.n):
        raise ValueError(f"target adjacency has shape {A.shape}, expected {(op.n, op.n)}")
    A_hat, cache = forward_gae(
        params, op, X, dropout=dropout, rng=rng, diffused_input=diffused_input,
        node_cap=node_cap,
    )
    diff = A_hat - A
    loss = float(np.sum(diff * diff))
    G = 2.0 * diff * A_hat * (1.0 - A_hat)
    Z = cache.activations[-1]
    dZ = (G + G.T) @ Z
    U = cache.inputs[-1]
    grads = [None] * len(params.weights)
    grads[-1] = U.T @ dZ
    if len(params.weights) > 1:
        dU = dZ @ params.weights[-1].T
        if cache.masks[-1] is not None:
            dU = dU * cache.masks[-1]
        d_hidden = op.diffuse_transpose(dU)
        grads[:-1] = _backprop_layers(
            params, op, d_hidden, cache.inputs[:-1], cache.activations[:-1],
            cache.masks[:-1],
        )
    return loss, grads


def embed(params, op, X, model="semi"):
    """Node representation fed to the model's head.

    For a classifier that is the output of the last hidden layer (the raw
    features when there is none); for the auto-encoder it is the linear
    embedding Z that scores the edges.
    """
    if model not in ("semi", "gae"):
        raise ValueError(f"model must be 'semi' or 'gae', got {model!r}")
    X = check_features(X, op.n)
    if params.layer_dims[0] != X.shape[1]:
        raise ValueError(
            f"input dim {X.shape[1]} does not match layer_dims[0]={params.layer_dims[0]}"
        )
    h, _, _, _ = _propagate(params, op, X, len(params.weights) - 1, 0.0, None, None)
    h = np.asarray(h, dtype=np.float64)
    if model == "gae":
        return op.diffuse(h) @ params.weights[-1]
    return h


# ---------------------------------------------------------------------------
# Checkpoint container.  Layout (all little-endian):
#   magic "GDEN1\n" | uint32 header length | JSON header (utf-8) | raw arrays
# The header records layer_dims, diffusion kind/alpha/variant, the
# head_diffusion flag, the init seed and the array shapes; each weight
# follows as float64 little-endian C-order bytes in layer order.
# ---------------------------------------------------------------------------

def save_checkpoint(path, params, kind, alpha, variant, head_diffusion=True, seed=None,
                    model="semi"):
    kind = DiffusionKind(kind)
    if model not in ("semi", "gae"):
        raise ValueError(f"model must be 'semi' or 'gae', got {model!r}")
    header = {
        "layer_dims": list(params.layer_dims),
        "kind": kind.value,
        "alpha": float(alpha),
        "variant": variant,
        "head_diffusion": bool(head_diffusion),
        "seed": int(params.seed if seed is None else seed),
        "model": model,
        "shapes": [list(W.shape) for W in params.weights],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for W in params.weights:
            f.write(np.ascontiguousarray(W, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (params, header dict)."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad magic {magic!r})")
        raw_len = f.read(4)
        if len(raw_len) != 4:
            raise ValueError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<I", raw_len)
        raw_header = f.read(hlen)
        if len(raw_header) != hlen:
            raise ValueError(f"{path}: truncated header")
        try:
            header = json.loads(raw_header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValueError(f"{path}: corrupt checkpoint header") from None
        weights = []
        for shape in header["shapes"]:
            count = int(np.prod(shape))
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated weight block")
            weights.append(np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape))
    header.setdefault("model", "semi")
    params = ModelParams(tuple(header["layer_dims"]), weights, int(header["seed"]))
    return params, header
