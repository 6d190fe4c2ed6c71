"""Dense float64 kernels and gradient-checking utilities.

Everything operates on 2-D float64 numpy arrays ("matrices"). All functions
are pure; randomized callers pass explicit seeds elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, ParameterError, ShapeError

Matrix = np.ndarray

ACTIVATIONS = ("relu", "elu", "tanh", "identity")


def as_matrix(a, name: str = "matrix") -> Matrix:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={m.ndim}")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def apply_activation(m: Matrix, kind: str) -> Matrix:
    """Elementwise activation; `kind` is one of relu, elu, tanh, identity."""
    m = np.asarray(m, dtype=np.float64)
    if kind == "relu":
        return np.maximum(m, 0.0)
    if kind == "elu":
        return np.where(m > 0.0, m, np.expm1(np.minimum(m, 0.0)))
    if kind == "tanh":
        return np.tanh(m)
    if kind == "identity":
        return m.copy()
    raise ParameterError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_deriv(pre: Matrix, kind: str) -> Matrix:
    """Derivative of `apply_activation` evaluated at the pre-activation values."""
    pre = np.asarray(pre, dtype=np.float64)
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    if kind == "elu":
        return np.where(pre > 0.0, 1.0, np.exp(np.minimum(pre, 0.0)))
    if kind == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    if kind == "identity":
        return np.ones_like(pre)
    raise ParameterError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def row_softmax(m: Matrix) -> Matrix:
    """Row-wise softmax with max subtraction so huge logits cannot overflow."""
    m = as_matrix(m)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def normalize_rows(m: Matrix) -> tuple[Matrix, np.ndarray]:
    """Unit-normalize rows; all-zero rows stay zero. Returns (normed, norms)."""
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return m / safe[:, None], norms


def cosine_sim_matrix(u: Matrix, v: Matrix) -> Matrix:
    """Pairwise cosine similarities; entry (i, j) pairs row i of u with row j of v.

    Rows with zero norm have similarity 0 with everything, by convention, so
    all-zero embeddings never propagate NaNs.
    """
    u = as_matrix(u, "u")
    v = as_matrix(v, "v")
    if u.shape[1] != v.shape[1]:
        raise ShapeError(f"row width mismatch: {u.shape[1]} vs {v.shape[1]}")
    un, _ = normalize_rows(u)
    vn, _ = normalize_rows(v)
    return un @ vn.T


def cosine_sim_backward_left(dsim: Matrix, u: Matrix, v: Matrix) -> Matrix:
    """Gradient of cosine_sim_matrix(u, v) w.r.t. u, treating v as constant.

    Zero-norm rows of u receive zero gradient, matching the forward
    convention that they have similarity 0 with everything.
    """
    dsim = np.asarray(dsim, dtype=np.float64)
    un, unorms = normalize_rows(u)
    vn, _ = normalize_rows(v)
    g = dsim @ vn
    dots = (g * un).sum(axis=1)
    du = g - dots[:, None] * un
    nz = unorms > 0.0
    du[nz] /= unorms[nz, None]
    du[~nz] = 0.0
    return du


def cosine_sim_backward_both(dsim: Matrix, u: Matrix) -> Matrix:
    """Gradient of cosine_sim_matrix(u, u) w.r.t. u (both arguments)."""
    dsim = np.asarray(dsim, dtype=np.float64)
    un, unorms = normalize_rows(u)
    g = (dsim + dsim.T) @ un
    dots = (g * un).sum(axis=1)
    du = g - dots[:, None] * un
    nz = unorms > 0.0
    du[nz] /= unorms[nz, None]
    du[~nz] = 0.0
    return du


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if eps <= 0.0:
        raise ParameterError("eps must be positive")
    x = np.asarray(x, dtype=np.float64).ravel().copy()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + eps
        fp = float(f(x))
        x[i] = orig - eps
        fm = float(f(x))
        x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"objective non-finite near coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad


@dataclass
class GradCheckReport:
    """Outcome of comparing an analytic gradient against central differences."""

    max_rel_error: float
    num_params_checked: int
    failing_indices: list = field(default_factory=list)


def check_gradient(
    f: Callable[[np.ndarray], float],
    x,
    analytic: np.ndarray,
    eps: float = 1e-6,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare `analytic` with finite_diff_grad(f, x).

    Relative error uses max(|a|, |n|, 1e-5) as the denominator so the finite
    difference noise floor (~1e-10 absolute in float64) cannot fail entries
    whose true value is essentially zero.
    """
    numeric = finite_diff_grad(f, x, eps)
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    if analytic.shape != numeric.shape:
        raise ShapeError(f"gradient length {analytic.size} != parameter length {numeric.size}")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5)
    rel = np.abs(analytic - numeric) / denom
    failing = np.nonzero(rel >= tol)[0].tolist()
    return GradCheckReport(
        max_rel_error=float(rel.max()) if rel.size else 0.0,
        num_params_checked=int(rel.size),
        failing_indices=failing,
    )


def pack_arrays(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Flatten a list of arrays into one vector (for finite-difference probes)."""
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def unpack_arrays(vec: np.ndarray, like: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Inverse of pack_arrays, using `like` for shapes."""
    vec = np.asarray(vec, dtype=np.float64).ravel()
    out = []
    offset = 0
    for a in like:
        size = a.size
        out.append(vec[offset : offset + size].reshape(a.shape).copy())
        offset += size
    if offset != vec.size:
        raise ShapeError(f"vector length {vec.size} does not match template ({offset})")
    return out
