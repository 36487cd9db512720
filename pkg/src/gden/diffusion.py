"""Closed-form regularized feature diffusion operators.

Each operator realizes an equilibrium diffusion Z = H(A, X) through one
linear solve against a sparse system matrix:

====================  =============================  =============================
kind                  variant="paper"                variant="derived"
====================  =============================  =============================
laplacian_reg         a (I + a L)^-1 X               a (a I + L)^-1 X
rwr                   (1-a)(I - a A D^-1)^-1 X       same
normalized_laplacian  a (I - a S)^-1 X               (1-a)(I - a S)^-1 X
multi_laplacian       a (I + a sum_v L_v)^-1 X       a (a I + sum_v L_v)^-1 X
====================  =============================  =============================

with L = D - A and S = D^-1/2 A D^-1/2.  The "derived" variants are the
exact stationary points of the underlying quadratic objectives; the
"paper" variants keep the published prefactors.  For rwr the nonsymmetric
system is reduced to a symmetric positive definite one through the
similarity I - a A D^-1 = D^1/2 (I - a S) D^-1/2, so every kind is solved
with conjugate gradients (or a dense factorization below a size cap).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .graphs import Graph, check_features, operator_apply


class DiffusionKind(str, Enum):
    LAPLACIAN_REG = "laplacian_reg"
    RWR = "rwr"
    NORMALIZED_LAPLACIAN = "normalized_laplacian"
    MULTI_LAPLACIAN = "multi_laplacian"


# Kinds whose linear map is symmetric (transpose application is a no-op).
_SYMMETRIC_KINDS = (
    DiffusionKind.LAPLACIAN_REG,
    DiffusionKind.NORMALIZED_LAPLACIAN,
    DiffusionKind.MULTI_LAPLACIAN,
)

VARIANTS = ("paper", "derived")


@dataclass(frozen=True)
class SolverConfig:
    """Controls for the internal linear solves.

    tolerance is a relative Frobenius residual; max_iterations of None
    means 10 * n.  Dense mode factorizes the system matrix once and is
    only permitted for n <= dense_cap.
    """

    tolerance: float = 1e-7
    max_iterations: int | None = None
    mode: str = "iterative"
    dense_cap: int = 2000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.mode not in ("iterative", "dense"):
            raise ValueError(f"mode must be 'iterative' or 'dense', got {self.mode!r}")
        if self.dense_cap < 1:
            raise ValueError(f"dense_cap must be >= 1, got {self.dense_cap}")

    def iteration_budget(self, n):
        return self.max_iterations if self.max_iterations is not None else 10 * n


class SolverError(RuntimeError):
    """Linear solve failed; carries the residual that was reached."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _frob(M):
    return float(np.sqrt(np.sum(M * M)))


def _block_cg(apply_fn, B, tol, max_iterations):
    """Conjugate gradients on all columns of B at once.

    Per-column step sizes are computed vectorized; a column whose search
    direction has collapsed (p^T A p ~ 0, i.e. it already converged) is
    frozen by zeroing its step.  Convergence is the relative Frobenius
    residual over the whole block, verified against the true residual
    before returning.
    """
    b_norm = _frob(B)
    X = np.zeros_like(B)
    if b_norm == 0.0:
        return X, 0.0, 0
    R = B.copy()
    P = R.copy()
    rs = np.sum(R * R, axis=0)
    total_iters = 0
    tiny = np.finfo(np.float64).tiny
    while total_iters < max_iterations:
        AP = apply_fn(P)
        if not np.all(np.isfinite(AP)):
            raise SolverError(
                "NaN/Inf encountered during conjugate gradient iteration",
                residual=_frob(R) / b_norm,
                iterations=total_iters,
            )
        pap = np.sum(P * AP, axis=0)
        step = np.where(pap > tiny, rs / np.where(pap > tiny, pap, 1.0), 0.0)
        X += step * P
        R -= step * AP
        rs_new = np.sum(R * R, axis=0)
        total_iters += 1
        if np.sqrt(rs_new.sum()) <= tol * b_norm:
            # Recurrence residual converged; confirm with the true one.
            R = B - apply_fn(X)
            rs_new = np.sum(R * R, axis=0)
            if np.sqrt(rs_new.sum()) <= tol * b_norm:
                return X, float(np.sqrt(rs_new.sum()) / b_norm), total_iters
            P = R.copy()
            rs = rs_new
            continue
        beta = np.where(rs > tiny, rs_new / np.where(rs > tiny, rs, 1.0), 0.0)
        P = R + beta * P
        rs = rs_new
    achieved = _frob(B - apply_fn(X)) / b_norm
    if achieved <= tol:
        return X, achieved, total_iters
    raise SolverError(
        f"conjugate gradient did not reach tolerance {tol:g} in "
        f"{max_iterations} iterations (residual {achieved:.3e})",
        residual=achieved,
        iterations=total_iters,
    )


def _block_cgnr(apply_fn, apply_transpose_fn, B, tol, max_iterations):
    """CG on the normal equations for a nonsymmetric map.

    Monitors the residual of the original system, not of the normal
    equations, so the returned X honors the same contract as _block_cg.
    """
    b_norm = _frob(B)
    X = np.zeros_like(B)
    if b_norm == 0.0:
        return X, 0.0, 0
    R = B.copy()
    Z = apply_transpose_fn(R)
    P = Z.copy()
    gamma = np.sum(Z * Z, axis=0)
    tiny = np.finfo(np.float64).tiny
    for it in range(1, max_iterations + 1):
        Q = apply_fn(P)
        if not np.all(np.isfinite(Q)):
            raise SolverError(
                "NaN/Inf encountered during normal-equation iteration",
                residual=_frob(R) / b_norm,
                iterations=it,
            )
        qq = np.sum(Q * Q, axis=0)
        step = np.where(qq > tiny, gamma / np.where(qq > tiny, qq, 1.0), 0.0)
        X += step * P
        R -= step * Q
        if _frob(R) <= tol * b_norm:
            achieved = _frob(B - apply_fn(X)) / b_norm
            if achieved <= tol:
                return X, achieved, it
            R = B - apply_fn(X)
        Z = apply_transpose_fn(R)
        gamma_new = np.sum(Z * Z, axis=0)
        beta = np.where(gamma > tiny, gamma_new / np.where(gamma > tiny, gamma, 1.0), 0.0)
        P = Z + beta * P
        gamma = gamma_new
    achieved = _frob(B - apply_fn(X)) / b_norm
    if achieved <= tol:
        return X, achieved, max_iterations
    raise SolverError(
        f"normal-equation solve did not reach tolerance {tol:g} in "
        f"{max_iterations} iterations (residual {achieved:.3e})",
        residual=achieved,
        iterations=max_iterations,
    )


def solve_linear(apply_fn, apply_transpose_fn, B, spd, cfg):
    """Solve M X = B where M is given only through its action.

    Parameters
    ----------
    apply_fn, apply_transpose_fn : callable
        Matrix-matrix products with M and M^T.  The transpose callback is
        only consulted for nonsymmetric solves.
    B : ndarray
        Right-hand side, shape (n,) or (n, k).
    spd : bool
        Whether M is symmetric positive definite; selects plain CG versus
        CG on the normal equations.
    cfg : SolverConfig

    Returns X with relative Frobenius residual <= cfg.tolerance or raises
    SolverError carrying the residual that was achieved.
    """
    B = np.asarray(B, dtype=np.float64)
    was_1d = B.ndim == 1
    if was_1d:
        B = B[:, None]
    n = B.shape[0]
    budget = cfg.iteration_budget(n)
    if cfg.mode == "dense":
        if n > cfg.dense_cap:
            raise ValueError(f"dense solver mode not permitted for n={n} > cap {cfg.dense_cap}")
        M = np.asarray(apply_fn(np.eye(n)), dtype=np.float64)
        X = np.linalg.solve(M, B)
        b_norm = _frob(B)
        residual = _frob(apply_fn(X) - B) / b_norm if b_norm > 0 else 0.0
        if residual > cfg.tolerance:
            raise SolverError(
                f"dense solve residual {residual:.3e} above tolerance {cfg.tolerance:g}",
                residual=residual,
                iterations=0,
            )
    elif spd:
        X, _, _ = _block_cg(apply_fn, B, cfg.tolerance, budget)
    else:
        X, _, _ = _block_cgnr(apply_fn, apply_transpose_fn, B, cfg.tolerance, budget)
    return X[:, 0] if was_1d else X


def validate_alpha(kind, alpha):
    """Check alpha against the admissible range of ``kind``.

    Laplacian-style kinds accept any alpha > 0; the restart and
    normalized-adjacency kinds need 0 < alpha < 1 so their system matrix
    stays positive definite.  Returns alpha as a float.
    """
    kind = DiffusionKind(kind)
    alpha = float(alpha)
    if kind in (DiffusionKind.LAPLACIAN_REG, DiffusionKind.MULTI_LAPLACIAN):
        if not alpha > 0:
            raise ValueError(f"{kind.value} requires alpha > 0, got {alpha}")
    else:
        if not 0 < alpha < 1:
            raise ValueError(
                f"{kind.value} requires 0 < alpha < 1 (spectral radius condition), got {alpha}"
            )
    return alpha


class DiffusionOperator:
    """A configured, reusable diffusion map.  Immutable after construction.

    Use :func:`make_diffusion` to build one; apply it with
    :func:`diffuse` / :func:`diffuse_transpose` or the equivalent
    ``.diffuse()`` / ``.diffuse_transpose()`` methods.
    """

    def __init__(self, kind, graphs, alpha, variant="paper", solver_cfg=None):
        kind = DiffusionKind(kind)
        if isinstance(graphs, Graph):
            graphs = (graphs,)
        else:
            graphs = tuple(graphs)
        if not graphs:
            raise ValueError("at least one graph is required")
        if kind != DiffusionKind.MULTI_LAPLACIAN and len(graphs) != 1:
            raise ValueError(f"{kind.value} operates on exactly one graph, got {len(graphs)}")
        n = graphs[0].n
        for g in graphs[1:]:
            if g.n != n:
                raise ValueError(f"graphs disagree on node count: {n} vs {g.n}")
        alpha = validate_alpha(kind, alpha)
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        if solver_cfg is None:
            solver_cfg = SolverConfig()
        if kind in (DiffusionKind.RWR, DiffusionKind.NORMALIZED_LAPLACIAN):
            if graphs[0].has_zero_degree():
                raise ValueError(
                    f"{kind.value} requires every node to have positive degree; "
                    "call add_self_loops first"
                )

        self.kind = kind
        self.graphs = graphs
        self.alpha = alpha
        self.variant = variant
        self.solver_cfg = solver_cfg
        self.n = n

        if kind in (DiffusionKind.RWR, DiffusionKind.NORMALIZED_LAPLACIAN):
            self._sqrt_deg = np.sqrt(graphs[0].degrees)
            self._inv_sqrt_deg = 1.0 / self._sqrt_deg
        if kind == DiffusionKind.RWR:
            self.prefactor = 1.0 - alpha
        elif kind == DiffusionKind.NORMALIZED_LAPLACIAN:
            self.prefactor = alpha if variant == "paper" else 1.0 - alpha
        else:
            self.prefactor = alpha

        self._lu = None
        if solver_cfg.mode == "dense":
            if n > solver_cfg.dense_cap:
                raise ValueError(
                    f"dense solver mode not permitted for n={n} > cap {solver_cfg.dense_cap}"
                )
            self._lu = scipy.linalg.lu_factor(self._system_apply(np.eye(n)))

    # The SPD core system every kind reduces to:
    #   laplacian_reg / multi_laplacian: I + a*sum(L)   (or a*I + sum(L))
    #   normalized_laplacian / rwr:      I - a*S
    def _system_apply(self, M):
        a = self.alpha
        if self.kind in (DiffusionKind.LAPLACIAN_REG, DiffusionKind.MULTI_LAPLACIAN):
            lap_sum = operator_apply(self.graphs[0], "laplacian", M)
            for g in self.graphs[1:]:
                lap_sum += operator_apply(g, "laplacian", M)
            if self.variant == "paper":
                return M + a * lap_sum
            return a * M + lap_sum
        return M - a * operator_apply(self.graphs[0], "norm_adjacency", M)

    def _core_solve(self, B):
        if self._lu is not None:
            X = scipy.linalg.lu_solve(self._lu, B)
            b_norm = _frob(B)
            if b_norm > 0:
                residual = _frob(self._system_apply(X) - B) / b_norm
                if residual > self.solver_cfg.tolerance:
                    raise SolverError(
                        f"dense solve residual {residual:.3e} above tolerance "
                        f"{self.solver_cfg.tolerance:g}",
                        residual=residual,
                    )
            return X
        budget = self.solver_cfg.iteration_budget(self.n)
        X, _, _ = _block_cg(self._system_apply, B, self.solver_cfg.tolerance, budget)
        return X

    def _prepare(self, X):
        X = np.asarray(X, dtype=np.float64)
        was_1d = X.ndim == 1
        if was_1d:
            X = X[:, None]
        check_features(X, self.n)
        return X, was_1d

    def diffuse(self, X):
        """Apply the diffusion map H to a feature matrix."""
        X, was_1d = self._prepare(X)
        if self.kind == DiffusionKind.RWR:
            # (I - a A D^-1)^-1 = D^1/2 (I - a S)^-1 D^-1/2
            Z = self._sqrt_deg[:, None] * self._core_solve(self._inv_sqrt_deg[:, None] * X)
        else:
            Z = self._core_solve(X)
        Z *= self.prefactor
        return Z[:, 0] if was_1d else Z

    def diffuse_transpose(self, G):
        """Apply H^T; equals diffuse() for the symmetric kinds."""
        if self.kind in _SYMMETRIC_KINDS:
            return self.diffuse(G)
        G, was_1d = self._prepare(G)
        # (I - a D^-1 A)^-1 = D^-1/2 (I - a S)^-1 D^1/2
        Z = self._inv_sqrt_deg[:, None] * self._core_solve(self._sqrt_deg[:, None] * G)
        Z *= self.prefactor
        return Z[:, 0] if was_1d else Z


def make_diffusion(kind, graphs, alpha, variant="paper", solver_cfg=None):
    """Build a reusable diffusion operator (validates all configuration)."""
    return DiffusionOperator(kind, graphs, alpha, variant=variant, solver_cfg=solver_cfg)


def diffuse(op, X):
    return op.diffuse(X)


def diffuse_transpose(op, G):
    return op.diffuse_transpose(G)
