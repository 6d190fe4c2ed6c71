"""Trainable components and their hand-derived gradients.

Three models share a 16-wide embedding space by default:

* a two-layer GCN ``z = s @ relu(s @ x @ w1) @ w2`` with an affine softmax
  head (the only model that sees structure),
* a two-layer MLP feature encoder ``h = relu(x @ w1 + b1) @ w2 + b2``,
* a graph learner: a two-layer generator (MLP or attentive/Hadamard) whose
  encoded rows are compared by cosine similarity, followed by the
  non-parametric adjacency processor top-k -> symmetrize -> degree-normalize.

Forward functions return cache objects holding every intermediate the
matching backward function needs; backward functions take the cache, so a
backward call without its forward is impossible by construction. Gradients
through the top-k sparsifier treat the selected support as constant, which
is the exact derivative wherever the selection has positive margin.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError
from .numerics import (
    activation_deriv,
    apply_activation,
    as_matrix,
    cosine_sim_backward_both,
    normalize_rows,
    row_softmax,
)


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class GcnParams:
    """GCN encoder weights (w1, w2) plus the affine classifier head (wc, bc)."""

    w1: np.ndarray
    w2: np.ndarray
    wc: np.ndarray
    bc: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.w2, self.wc, self.bc]

    def copy(self) -> "GcnParams":
        return GcnParams(self.w1.copy(), self.w2.copy(), self.wc.copy(), self.bc.copy())


@dataclass
class EncoderParams:
    """Structure-free MLP encoder weights; output width matches the GCN's."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass
class MlpParams:
    """Encoder plus its own affine head: the MLP classifier used by baselines."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wc: np.ndarray
    bc: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.wc, self.bc]

    def copy(self) -> "MlpParams":
        return MlpParams(*[a.copy() for a in self.arrays()])

    @property
    def encoder(self) -> EncoderParams:
        return EncoderParams(self.w1, self.b1, self.w2, self.b2)


GENERATOR_VARIANTS = ("mlp", "attentive")


@dataclass
class LearnerParams:
    """Graph generator weights: two d->d matrices (mlp) or two length-d vectors."""

    variant: str
    layers: list[np.ndarray] = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        return list(self.layers)

    def copy(self) -> "LearnerParams":
        return LearnerParams(self.variant, [w.copy() for w in self.layers])


@dataclass
class LearnerConfig:
    """Adjacency-processor settings: neighbors kept per row and activations."""

    k: int
    activation: str = "relu"  # generator encoder activation
    metric: str = "cosine"
    sym_activation: str = "relu"


def zeros_like_params(p):
    g = p.copy()
    for a in g.arrays():
        a[...] = 0.0
    return g


# ---------------------------------------------------------------------------
# initialization


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_in, fan_out))


def init_gcn_params(d: int, hidden: int, classes: int, rng: np.random.Generator) -> GcnParams:
    return GcnParams(
        w1=glorot(rng, d, hidden),
        w2=glorot(rng, hidden, hidden),
        wc=glorot(rng, hidden, classes),
        bc=np.zeros(classes),
    )


def init_encoder_params(d: int, hidden: int, rng: np.random.Generator) -> EncoderParams:
    return EncoderParams(
        w1=glorot(rng, d, hidden),
        b1=np.zeros(hidden),
        w2=glorot(rng, hidden, hidden),
        b2=np.zeros(hidden),
    )


def init_mlp_params(d: int, hidden: int, classes: int, rng: np.random.Generator) -> MlpParams:
    enc = init_encoder_params(d, hidden, rng)
    return MlpParams(enc.w1, enc.b1, enc.w2, enc.b2, glorot(rng, hidden, classes), np.zeros(classes))


def init_learner_params(d: int, variant: str, rng: np.random.Generator, layers: int = 2) -> LearnerParams:
    if variant == "mlp":
        ws = [glorot(rng, d, d) for _ in range(layers)]
    elif variant == "attentive":
        # ones = identity gating, so the initial structure is the similarity
        # of the (activated) raw features
        ws = [np.ones(d) for _ in range(layers)]
    else:
        raise ParameterError(f"unknown generator variant {variant!r}; expected one of {GENERATOR_VARIANTS}")
    return LearnerParams(variant, ws)


# ---------------------------------------------------------------------------
# GCN


@dataclass
class GcnCache:
    x: np.ndarray
    s: np.ndarray
    xw1: np.ndarray
    a1: np.ndarray
    r: np.ndarray
    m: np.ndarray
    z: np.ndarray
    logits: np.ndarray


def gcn_forward(x, s, p: GcnParams) -> GcnCache:
    """Two propagation steps then the affine head; returns all intermediates."""
    x = as_matrix(x, "x")
    s = as_matrix(s, "s")
    n = x.shape[0]
    if s.shape != (n, n):
        raise ShapeError(f"s must be ({n}, {n}), got {s.shape}")
    if x.shape[1] != p.w1.shape[0]:
        raise ShapeError(f"x width {x.shape[1]} != w1 rows {p.w1.shape[0]}")
    if p.w1.shape[1] != p.w2.shape[0] or p.w2.shape[1] != p.wc.shape[0]:
        raise ShapeError("inconsistent GCN layer widths")
    xw1 = x @ p.w1
    a1 = s @ xw1
    r = np.maximum(a1, 0.0)
    m = r @ p.w2
    z = s @ m
    logits = z @ p.wc + p.bc
    return GcnCache(x=x, s=s, xw1=xw1, a1=a1, r=r, m=m, z=z, logits=logits)


def gcn_backward(cache: GcnCache, p: GcnParams, dlogits=None, dz=None, need_ds: bool = False):
    """Accumulate parameter gradients from upstream gradients on logits and/or z.

    With need_ds the gradient with respect to the propagation matrix s is also
    returned (the graph-learner path needs it); otherwise ds is None.
    """
    grads = zeros_like_params(p)
    dz_total = np.zeros_like(cache.z)
    if dlogits is not None:
        dlogits = np.asarray(dlogits, dtype=np.float64)
        grads.wc[...] = cache.z.T @ dlogits
        grads.bc[...] = dlogits.sum(axis=0)
        dz_total += dlogits @ p.wc.T
    if dz is not None:
        dz_total += dz
    ds = np.zeros_like(cache.s) if need_ds else None
    dm = cache.s.T @ dz_total
    if need_ds:
        ds += dz_total @ cache.m.T
    grads.w2[...] = cache.r.T @ dm
    dr = dm @ p.w2.T
    da1 = dr * (cache.a1 > 0.0)
    if need_ds:
        ds += da1 @ cache.xw1.T
    dxw1 = cache.s.T @ da1
    grads.w1[...] = cache.x.T @ dxw1
    return grads, ds


# ---------------------------------------------------------------------------
# feature encoder


@dataclass
class EncoderCache:
    x: np.ndarray
    a1: np.ndarray
    r: np.ndarray
    h: np.ndarray


def feature_encoder_forward(x, p: EncoderParams) -> EncoderCache:
    x = as_matrix(x, "x")
    if x.shape[1] != p.w1.shape[0]:
        raise ShapeError(f"x width {x.shape[1]} != w1 rows {p.w1.shape[0]}")
    a1 = x @ p.w1 + p.b1
    r = np.maximum(a1, 0.0)
    h = r @ p.w2 + p.b2
    return EncoderCache(x=x, a1=a1, r=r, h=h)


def feature_encoder_backward(cache: EncoderCache, p: EncoderParams, dh) -> EncoderParams:
    dh = np.asarray(dh, dtype=np.float64)
    grads = zeros_like_params(p)
    grads.w2[...] = cache.r.T @ dh
    grads.b2[...] = dh.sum(axis=0)
    dr = dh @ p.w2.T
    da1 = dr * (cache.a1 > 0.0)
    grads.w1[...] = cache.x.T @ da1
    grads.b1[...] = da1.sum(axis=0)
    return grads


# ---------------------------------------------------------------------------
# classifier head (shared by GCN embeddings and encoder embeddings)


def classifier_head(e, wc, bc) -> np.ndarray:
    e = as_matrix(e, "e")
    if e.shape[1] != wc.shape[0]:
        raise ShapeError(f"embedding width {e.shape[1]} != head rows {wc.shape[0]}")
    return row_softmax(e @ wc + bc)


# ---------------------------------------------------------------------------
# MLP classifier (baselines)


@dataclass
class MlpCache:
    enc: EncoderCache
    logits: np.ndarray


def mlp_forward(x, p: MlpParams) -> MlpCache:
    enc = feature_encoder_forward(x, p.encoder)
    return MlpCache(enc=enc, logits=enc.h @ p.wc + p.bc)


def mlp_backward(cache: MlpCache, p: MlpParams, dlogits, dh=None) -> MlpParams:
    dlogits = np.asarray(dlogits, dtype=np.float64)
    grads = zeros_like_params(p)
    grads.wc[...] = cache.enc.h.T @ dlogits
    grads.bc[...] = dlogits.sum(axis=0)
    dh_total = dlogits @ p.wc.T
    if dh is not None:
        dh_total = dh_total + dh
    eg = feature_encoder_backward(cache.enc, p.encoder, dh_total)
    grads.w1[...] = eg.w1
    grads.b1[...] = eg.b1
    grads.w2[...] = eg.w2
    grads.b2[...] = eg.b2
    return grads


# ---------------------------------------------------------------------------
# graph generator


@dataclass
class GeneratorCache:
    variant: str
    activation: str
    inputs: list[np.ndarray]
    pres: list[np.ndarray]
    r: np.ndarray
    r_hat: np.ndarray
    norms: np.ndarray
    s_tilde: np.ndarray


def graph_generator_forward(x, p: LearnerParams, activation: str = "relu") -> GeneratorCache:
    """Encode rows (MLP or Hadamard gating) and take pairwise cosine similarity."""
    r = as_matrix(x, "x")
    inputs: list[np.ndarray] = []
    pres: list[np.ndarray] = []
    for w in p.layers:
        inputs.append(r)
        if p.variant == "mlp":
            if r.shape[1] != w.shape[0]:
                raise ShapeError(f"generator layer expects width {w.shape[0]}, got {r.shape[1]}")
            pre = r @ w
        elif p.variant == "attentive":
            if r.shape[1] != w.shape[0]:
                raise ShapeError(f"attentive weight length {w.shape[0]} != width {r.shape[1]}")
            pre = r * w[None, :]
        else:
            raise ParameterError(f"unknown generator variant {p.variant!r}")
        pres.append(pre)
        r = apply_activation(pre, activation)
    r_hat, norms = normalize_rows(r)
    s_tilde = r_hat @ r_hat.T
    return GeneratorCache(
        variant=p.variant, activation=activation, inputs=inputs, pres=pres,
        r=r, r_hat=r_hat, norms=norms, s_tilde=s_tilde,
    )


def graph_generator_backward(cache: GeneratorCache, p: LearnerParams, ds_tilde) -> LearnerParams:
    """Chain an upstream gradient on the similarity matrix back to the weights."""
    ds_tilde = np.asarray(ds_tilde, dtype=np.float64)
    # both arguments of the similarity are the same encoded matrix
    dr = cosine_sim_backward_both(ds_tilde, cache.r)

    grad_layers: list[np.ndarray] = [None] * len(p.layers)  # type: ignore[list-item]
    for l in range(len(p.layers) - 1, -1, -1):
        da = dr * activation_deriv(cache.pres[l], cache.activation)
        if p.variant == "mlp":
            grad_layers[l] = cache.inputs[l].T @ da
            dr = da @ p.layers[l].T
        else:
            grad_layers[l] = (da * cache.inputs[l]).sum(axis=0)
            dr = da * p.layers[l][None, :]
    return LearnerParams(p.variant, grad_layers)


# ---------------------------------------------------------------------------
# adjacency processor


@dataclass
class ProcessorCache:
    mask: np.ndarray
    s_sp: np.ndarray
    s_sym: np.ndarray
    deg: np.ndarray
    u: np.ndarray
    s: np.ndarray
    sym_activation: str


def topk_mask(s_tilde: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of each row's k largest entries; ties keep the lower index."""
    n = s_tilde.shape[0]
    mask = np.zeros_like(s_tilde, dtype=bool)
    for i in range(n):
        order = np.argsort(-s_tilde[i], kind="stable")
        mask[i, order[:k]] = True
    return mask


def topk_margin(s_tilde: np.ndarray, k: int) -> float:
    """Smallest gap between a row's kept and first dropped value (inf if none dropped)."""
    n = s_tilde.shape[1]
    if k >= n:
        return np.inf
    sorted_desc = -np.sort(-s_tilde, axis=1)
    return float((sorted_desc[:, k - 1] - sorted_desc[:, k]).min())


def adjacency_process(s_tilde, cfg: LearnerConfig):
    """Sparsify (top-k per row), activate+symmetrize, degree-normalize.

    Returns (s, cache). Rows whose symmetrized degree is zero map to zero
    rows rather than dividing by zero.
    """
    s_tilde = as_matrix(s_tilde, "s_tilde")
    n = s_tilde.shape[0]
    if s_tilde.shape != (n, n):
        raise ShapeError(f"s_tilde must be square, got {s_tilde.shape}")
    if not 1 <= cfg.k < n:
        raise ParameterError(f"need 1 <= k < n, got k={cfg.k}, n={n}")
    mask = topk_mask(s_tilde, cfg.k)
    s_sp = np.where(mask, s_tilde, 0.0)
    act = apply_activation(s_sp, cfg.sym_activation)
    s_sym = 0.5 * (act + act.T)
    deg = s_sym.sum(axis=1)
    u = np.where(deg > 0.0, 1.0 / np.sqrt(np.where(deg > 0.0, deg, 1.0)), 0.0)
    s = s_sym * u[:, None] * u[None, :]
    return s, ProcessorCache(mask=mask, s_sp=s_sp, s_sym=s_sym, deg=deg, u=u, s=s,
                             sym_activation=cfg.sym_activation)


def normalization_backward(ds, s_sym) -> np.ndarray:
    """Gradient of D^-1/2 s_sym D^-1/2 w.r.t. the entries of s_sym.

    With u = deg^-1/2 the direct term is ds * u u^T; the degree dependence
    (deg_k = sum_l s_sym_kl) adds one row-constant and one column-constant
    correction. Zero-degree rows stay zero, matching the forward convention.
    """
    ds = np.asarray(ds, dtype=np.float64)
    s_sym = np.asarray(s_sym, dtype=np.float64)
    deg = s_sym.sum(axis=1)
    u = np.where(deg > 0.0, 1.0 / np.sqrt(np.where(deg > 0.0, deg, 1.0)), 0.0)
    direct = ds * np.outer(u, u)
    # entry s_kl sits in row k, so it perturbs deg_k only; both the u_i and
    # u_j factors therefore contribute row-constant corrections to row k
    row_inner = (ds * s_sym * u[None, :]).sum(axis=1)
    col_inner = (ds * s_sym * u[:, None]).sum(axis=0)
    correction = 0.5 * (u ** 3) * (row_inner + col_inner)
    return direct - correction[:, None]


def adjacency_process_backward(ds, cache: ProcessorCache) -> np.ndarray:
    """Gradient of the processor: through surviving top-k entries and the
    degree terms of the normalization stage."""
    ds_sym = normalization_backward(ds, cache.s_sym)
    # symmetrization
    dact = 0.5 * (ds_sym + ds_sym.T)
    dsp = dact * activation_deriv(cache.s_sp, cache.sym_activation)
    # sparsification: mask treated as constant
    return np.where(cache.mask, dsp, 0.0)


def generate_structure(x, omega: LearnerParams, cfg: LearnerConfig):
    """Full graph-learner forward: features -> similarity -> processed adjacency."""
    gen = graph_generator_forward(x, omega, cfg.activation)
    s, proc = adjacency_process(gen.s_tilde, cfg)
    return s, gen, proc
