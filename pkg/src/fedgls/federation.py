"""Federated training: client rounds, server aggregation, and all methods.

Within a round clients are independent (shared-nothing state, read-only
global snapshot) and may run on a thread pool; aggregation is a sequential
barrier over results collected in client order, so serial and parallel
execution produce bit-identical metrics. Nothing inside a round draws
randomness; all RNG happens at setup from explicit seeds.

Only GCN and encoder parameters (or prototypes, for the prototype method)
ever cross the client boundary: graph-learner weights, edge lists, and
feature matrices stay on their client by construction, and
fedavg_aggregate rejects learner parameters outright.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParameterError, ShapeError
from .graph_core import (
    Graph,
    SbmConfig,
    knn_graph,
    normalize_adjacency,
    normalize_adjacency_from_edges,
)
from .losses import LossOutput, contrastive_loss, cross_entropy_loss, kd_loss
from .models import (
    EncoderParams,
    GcnParams,
    LearnerConfig,
    LearnerParams,
    MlpParams,
    adjacency_process,
    adjacency_process_backward,
    feature_encoder_backward,
    feature_encoder_forward,
    gcn_backward,
    gcn_forward,
    graph_generator_backward,
    graph_generator_forward,
    init_encoder_params,
    init_gcn_params,
    init_learner_params,
    init_mlp_params,
    mlp_backward,
    mlp_forward,
    zeros_like_params,
)

METHODS = ("fedgls", "fed-mlp", "fed-gnnmlp", "fedproto", "local-gnnk", "fed-gnnk", "fed-gnn")
OPTIMIZERS = ("adam", "gd")


# ---------------------------------------------------------------------------
# configuration and metrics


@dataclass
class FederationConfig:
    """Fully resolved experiment settings (defaults = reproduction settings)."""

    method: str = "fedgls"
    rounds: int = 100
    local_epochs: int = 5
    lr_gnn: float = 0.01
    lr_encoder: float = 0.01
    lr_learner: float = 0.001
    tau: float = 0.2
    k: int = 10
    hidden: int = 16
    graphless_ratio: float = 0.5
    graphless_clients: Optional[tuple[int, ...]] = None
    repeats: int = 1
    seed: int = 0
    dataset: Optional[str] = None
    sbm: Optional[SbmConfig] = None
    optimizer: str = "adam"
    fedproto_lambda: float = 1.0
    generator: str = "attentive"
    generator_activation: str = "relu"
    knn_metric: str = "euclidean"
    min_community_size: Optional[int] = None
    workers: int = 0
    out: Optional[str] = None

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if self.rounds < 1 or self.local_epochs < 1 or self.repeats < 1:
            raise ConfigError("rounds, local_epochs, and repeats must be >= 1")
        for name in ("lr_gnn", "lr_encoder", "lr_learner"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.hidden < 1:
            raise ConfigError("hidden must be >= 1")
        if not 0.0 <= self.graphless_ratio <= 1.0:
            raise ConfigError("graphless_ratio must be in [0, 1]")
        if self.fedproto_lambda < 0:
            raise ConfigError("fedproto_lambda must be >= 0")
        if self.generator not in ("mlp", "attentive"):
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.generator_activation not in ("relu", "elu", "tanh", "identity"):
            raise ConfigError(f"unknown generator_activation {self.generator_activation!r}")
        if self.knn_metric not in ("euclidean", "cosine"):
            raise ConfigError(f"unknown knn_metric {self.knn_metric!r}")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.sbm is not None:
            try:
                self.sbm.validate()
            except ParameterError as exc:
                raise ConfigError(f"invalid sbm settings: {exc}") from exc


@dataclass
class ClientMetrics:
    client_id: int
    n: int
    train_loss: float
    train_acc: float
    val_acc: float
    test_acc: float


@dataclass
class RoundMetrics:
    round: int
    clients: list[ClientMetrics]
    train_loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    wall_time: float = 0.0


@dataclass
class Client:
    """Immutable per-client data as handed to the federation."""

    client_id: int
    graph: Graph
    graphless: bool


@dataclass
class GlobalState:
    theta: GcnParams
    phi: EncoderParams
    round: int = 0


@dataclass
class ClientState:
    """Mutable per-client training state for the structure-learning method."""

    client: Client
    theta: GcnParams
    phi: EncoderParams
    omega: Optional[LearnerParams]
    s: np.ndarray
    seed: int
    omega_opt: Optional["Optimizer"] = None


@dataclass
class FederationResult:
    rounds: list[RoundMetrics]
    final: dict


# ---------------------------------------------------------------------------
# optimizers


class Optimizer:
    def step(self, params, grads, lr: float) -> None:  # pragma: no cover - interface
        raise NotImplementedError


class GradientDescent(Optimizer):
    def step(self, params, grads, lr: float) -> None:
        for a, g in zip(params.arrays(), grads.arrays()):
            a -= lr * g


class Adam(Optimizer):
    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]

    def step(self, params, grads, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            a -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, params) -> Optimizer:
    if kind == "adam":
        return Adam(params)
    if kind == "gd":
        return GradientDescent()
    raise ConfigError(f"unknown optimizer {kind!r}")


# ---------------------------------------------------------------------------
# aggregation


def _contains_learner(obj) -> bool:
    if isinstance(obj, LearnerParams):
        return True
    if isinstance(obj, (tuple, list)):
        return any(_contains_learner(o) for o in obj)
    return False


def fedavg_aggregate(params: Sequence, weights: Sequence[float]):
    """Node-count-weighted coordinate-wise mean of parameter containers.

    Accepts a list of parameter dataclasses, or a list of same-length tuples
    of them (aggregated position-wise). Graph-learner parameters are local
    by contract and are rejected.
    """
    params = list(params)
    if not params:
        raise ParameterError("nothing to aggregate")
    if len(params) != len(weights):
        raise ParameterError("params and weights lengths differ")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ParameterError("aggregation weights must be positive")
    if _contains_learner(params):
        raise ParameterError("graph-learner parameters never cross the client boundary")
    w = w / w.sum()
    if isinstance(params[0], tuple):
        width = len(params[0])
        if any(len(p) != width for p in params):
            raise ParameterError("inconsistent tuple widths")
        return tuple(fedavg_aggregate([p[i] for p in params], weights) for i in range(width))
    # anchor on the first client's values: sum_i w_i a_i computed as
    # a_0 + sum_i w_i (a_i - a_0), which is exactly idempotent when all
    # clients upload identical parameters (fixed-point invariant)
    anchor = params[0].copy()
    out = zeros_like_params(params[0])
    template = out.arrays()
    for wi, p in zip(w, params):
        arrs = p.arrays()
        if len(arrs) != len(template):
            raise ShapeError("parameter structures differ")
        for acc, a, base in zip(template, arrs, anchor.arrays()):
            if acc.shape != a.shape:
                raise ShapeError(f"parameter shape mismatch: {acc.shape} vs {a.shape}")
            acc += wi * (a - base)
    for acc, base in zip(template, anchor.arrays()):
        acc += base
    return out


# ---------------------------------------------------------------------------
# prototypes


def compute_prototypes(embeddings, labels, train_mask) -> dict[int, tuple[np.ndarray, int]]:
    """Class-wise mean embedding over the masked nodes; absent classes skipped."""
    mask = np.asarray(train_mask, dtype=np.int64)
    if mask.size == 0:
        raise ParameterError("prototypes need a nonempty training mask")
    emb = np.asarray(embeddings, dtype=np.float64)[mask]
    y = np.asarray(labels, dtype=np.int64)[mask]
    out: dict[int, tuple[np.ndarray, int]] = {}
    for c in np.unique(y):
        rows = emb[y == c]
        out[int(c)] = (rows.mean(axis=0), int(rows.shape[0]))
    return out


def aggregate_prototypes(proto_sets: Sequence[dict[int, tuple[np.ndarray, int]]]) -> dict[int, np.ndarray]:
    """Support-weighted mean of per-client prototypes, class by class."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for protos in proto_sets:
        for c, (vec, cnt) in protos.items():
            if c in sums:
                sums[c] = sums[c] + cnt * vec
                counts[c] += cnt
            else:
                sums[c] = cnt * vec
                counts[c] = cnt
    return {c: sums[c] / counts[c] for c in sums}


def prototype_pull(embeddings, labels, train_mask, global_protos, lam: float):
    """lam * sum_c ||local proto_c - global proto_c||^2 and its embedding gradient."""
    demb = np.zeros_like(np.asarray(embeddings, dtype=np.float64))
    if not global_protos or lam == 0.0:
        return 0.0, demb
    local = compute_prototypes(embeddings, labels, train_mask)
    mask = np.asarray(train_mask, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    value = 0.0
    for c, (vec, cnt) in local.items():
        if c not in global_protos:
            continue
        diff = vec - global_protos[c]
        value += lam * float(diff @ diff)
        pull = 2.0 * lam * diff / cnt
        for i in mask[y[mask] == c]:
            demb[i] += pull
    return value, demb


# ---------------------------------------------------------------------------
# evaluation


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        return 0.0
    pred = logits[mask].argmax(axis=1)
    return float((pred == np.asarray(labels)[mask]).mean())


def _client_metrics(client: Client, logits: np.ndarray) -> ClientMetrics:
    g = client.graph
    ce = cross_entropy_loss(logits, g.labels, g.train_mask)
    return ClientMetrics(
        client_id=client.client_id,
        n=g.n,
        train_loss=ce.value,
        train_acc=accuracy(logits, g.labels, g.train_mask),
        val_acc=accuracy(logits, g.labels, g.val_mask),
        test_acc=accuracy(logits, g.labels, g.test_mask),
    )


def weighted_round_metrics(rows: list[ClientMetrics], round_index: int, wall: float = 0.0) -> RoundMetrics:
    """Node-count-weighted global figures over per-client metrics."""
    w = np.array([r.n for r in rows], dtype=np.float64)
    w = w / w.sum()

    def mean(attr: str) -> float:
        return float(sum(wi * getattr(r, attr) for wi, r in zip(w, rows)))

    return RoundMetrics(
        round=round_index,
        clients=rows,
        train_loss=mean("train_loss"),
        train_acc=mean("train_acc"),
        val_acc=mean("val_acc"),
        test_acc=mean("test_acc"),
        wall_time=wall,
    )


def evaluate(states: Sequence[ClientState], global_state: GlobalState) -> list[ClientMetrics]:
    """Per-client metrics of the global GCN on each client's cached structure."""
    return [
        _client_metrics(st.client, gcn_forward(st.client.graph.x, st.s, global_state.theta).logits)
        for st in states
    ]


# ---------------------------------------------------------------------------
# structure-learning method


def _learner_cfg(cfg: FederationConfig, n: int) -> LearnerConfig:
    return LearnerConfig(k=min(cfg.k, n - 1), activation=cfg.generator_activation)


def make_client_state(client: Client, cfg: FederationConfig, theta: GcnParams, phi: EncoderParams) -> ClientState:
    """Initial per-client state; the graphless structure comes from the
    freshly initialized generator, everyone else caches their normalized
    real adjacency."""
    seed_seq = (cfg.seed, 202, client.client_id)
    rng = np.random.default_rng(seed_seq)
    g = client.graph
    if client.graphless:
        omega = init_learner_params(g.feature_dim, cfg.generator, rng)
        s, _, _ = _structure(g.x, omega, cfg)
        omega_opt = make_optimizer(cfg.optimizer, omega)
    else:
        if g.num_edges == 0:
            raise DataError(f"client {client.client_id} holds no edges but is not graphless")
        omega = None
        s = normalize_adjacency(g, add_self_loops=True)
        omega_opt = None
    return ClientState(
        client=client,
        theta=theta.copy(),
        phi=phi.copy(),
        omega=omega,
        s=s,
        seed=client.client_id,
        omega_opt=omega_opt,
    )


def _structure(x, omega: LearnerParams, cfg: FederationConfig):
    lcfg = _learner_cfg(cfg, x.shape[0])
    gen = graph_generator_forward(x, omega, cfg.generator_activation)
    s, proc = adjacency_process(gen.s_tilde, lcfg)
    return s, gen, proc


def client_round(state: ClientState, global_state: GlobalState, cfg: FederationConfig):
    """One local round: copy globals, one graph-learner update (graphless
    only) with the structure regenerated afterwards and held fixed, then
    local_epochs alternating classifier and encoder steps (the distillation
    teacher is refreshed after each classifier step)."""
    state.theta = global_state.theta.copy()
    state.phi = global_state.phi.copy()
    g = state.client.graph
    x = g.x
    stats: dict[str, float] = {}

    if state.client.graphless:
        s0, gen_cache, proc_cache = _structure(x, state.omega, cfg)
        zc = gcn_forward(x, s0, state.theta)
        hc = feature_encoder_forward(x, state.phi)
        cl: LossOutput = contrastive_loss(zc.z, hc.h, cfg.tau)
        _, ds = gcn_backward(zc, state.theta, dz=cl.grad, need_ds=True)
        ds_tilde = adjacency_process_backward(ds, proc_cache)
        omega_grads = graph_generator_backward(gen_cache, state.omega, ds_tilde)
        state.omega_opt.step(state.omega, omega_grads, cfg.lr_learner)
        state.s, _, _ = _structure(x, state.omega, cfg)
        stats["contrastive_loss"] = cl.value

    theta_opt = make_optimizer(cfg.optimizer, state.theta)
    phi_opt = make_optimizer(cfg.optimizer, state.phi)
    for _ in range(cfg.local_epochs):
        zc = gcn_forward(x, state.s, state.theta)
        ce = cross_entropy_loss(zc.logits, g.labels, g.train_mask)
        theta_grads, _ = gcn_backward(zc, state.theta, dlogits=ce.grad)
        theta_opt.step(state.theta, theta_grads, cfg.lr_gnn)

        fresh = gcn_forward(x, state.s, state.theta)
        hc = feature_encoder_forward(x, state.phi)
        kd = kd_loss(fresh.z, hc.h, state.theta.wc, state.theta.bc)
        phi_grads = feature_encoder_backward(hc, state.phi, kd.grad)
        phi_opt.step(state.phi, phi_grads, cfg.lr_encoder)
        stats["train_loss"] = ce.value
        stats["kd_loss"] = kd.value
    return state.theta, state.phi, stats


def _map_clients(fn: Callable, items: Sequence, workers: int) -> list:
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _check_clients(clients: Sequence[Client], method: str) -> None:
    if len(clients) < 2:
        raise ParameterError("federation needs at least 2 clients")
    dims = {c.graph.feature_dim for c in clients}
    if len(dims) != 1:
        raise DataError(f"clients disagree on feature dimension: {sorted(dims)}")
    if method == "fedgls":
        flags = {c.graphless for c in clients}
        if flags != {True, False}:
            raise ParameterError("fedgls needs at least one graphless and one graph-holding client")
    if method == "fed-gnn":
        for c in clients:
            if c.graph.num_edges == 0:
                raise DataError(f"fed-gnn requires edge data on every client; client {c.client_id} has none")


def num_classes_of(clients: Sequence[Client]) -> int:
    return int(max(int(c.graph.labels.max()) for c in clients)) + 1


def run_federation(cfg: FederationConfig, clients: Sequence[Client]) -> FederationResult:
    """Train with cfg.method over the given clients; deterministic in cfg.seed."""
    cfg.validate()
    _check_clients(clients, cfg.method)
    if cfg.method == "fedgls":
        return _run_fedgls(cfg, clients)
    return run_baseline(cfg.method, cfg, clients)


def _run_fedgls(cfg: FederationConfig, clients: Sequence[Client]) -> FederationResult:
    p = num_classes_of(clients)
    d = clients[0].graph.feature_dim
    init_rng = np.random.default_rng((cfg.seed, 101))
    theta = init_gcn_params(d, cfg.hidden, p, init_rng)
    phi = init_encoder_params(d, cfg.hidden, init_rng)
    states = [make_client_state(c, cfg, theta, phi) for c in clients]
    global_state = GlobalState(theta=theta, phi=phi, round=0)
    rounds: list[RoundMetrics] = []
    for r in range(1, cfg.rounds + 1):
        t0 = time.perf_counter()
        results = _map_clients(lambda st: client_round(st, global_state, cfg), states, cfg.workers)
        uploads = [(theta_k, phi_k) for theta_k, phi_k, _ in results]
        weights = [st.client.graph.n for st in states]
        theta, phi = fedavg_aggregate(uploads, weights)
        global_state = GlobalState(theta=theta, phi=phi, round=r)
        per_client = evaluate(states, global_state)
        rounds.append(weighted_round_metrics(per_client, r, time.perf_counter() - t0))
    return FederationResult(rounds=rounds, final={"theta": theta, "phi": phi, "states": states})


# ---------------------------------------------------------------------------
# baselines


@dataclass
class _BaselineClient:
    client: Client
    kind: str  # "gcn" | "mlp"
    s: Optional[np.ndarray]
    params: object = None
    opt: Optional[Optimizer] = None


def _baseline_structure(client: Client, cfg: FederationConfig, use_knn_for_graphless: bool) -> np.ndarray:
    g = client.graph
    if client.graphless and use_knn_for_graphless:
        edges = knn_graph(g.x, min(cfg.k, g.n - 1), cfg.knn_metric)
        return normalize_adjacency_from_edges(g.n, edges, add_self_loops=True)
    if g.num_edges == 0 and not client.graphless:
        raise DataError(f"client {client.client_id} holds no edges")
    return normalize_adjacency(g, add_self_loops=True)


def _gcn_epochs(params: GcnParams, opt: Optimizer, client: Client, s, cfg: FederationConfig,
                global_protos=None) -> float:
    g = client.graph
    last = 0.0
    for _ in range(cfg.local_epochs):
        cache = gcn_forward(g.x, s, params)
        ce = cross_entropy_loss(cache.logits, g.labels, g.train_mask)
        dz = None
        if global_protos is not None:
            _, dz = prototype_pull(cache.z, g.labels, g.train_mask, global_protos, cfg.fedproto_lambda)
        grads, _ = gcn_backward(cache, params, dlogits=ce.grad, dz=dz)
        opt.step(params, grads, cfg.lr_gnn)
        last = ce.value
    return last


def _mlp_epochs(params: MlpParams, opt: Optimizer, client: Client, cfg: FederationConfig,
                global_protos=None) -> float:
    g = client.graph
    last = 0.0
    for _ in range(cfg.local_epochs):
        cache = mlp_forward(g.x, params)
        ce = cross_entropy_loss(cache.logits, g.labels, g.train_mask)
        dh = None
        if global_protos is not None:
            _, dh = prototype_pull(cache.enc.h, g.labels, g.train_mask, global_protos, cfg.fedproto_lambda)
        grads = mlp_backward(cache, params, ce.grad, dh=dh)
        opt.step(params, grads, cfg.lr_encoder)
        last = ce.value
    return last


def _baseline_logits(bc: _BaselineClient, params) -> np.ndarray:
    if bc.kind == "gcn":
        return gcn_forward(bc.client.graph.x, bc.s, params).logits
    return mlp_forward(bc.client.graph.x, params).logits


def run_baseline(method: str, cfg: FederationConfig, clients: Sequence[Client]) -> FederationResult:
    """The six comparison methods; see METHODS for the selector values."""
    if method not in METHODS or method == "fedgls":
        raise ConfigError(f"unknown baseline {method!r}")
    cfg = replace(cfg, method=method)
    cfg.validate()
    _check_clients(clients, method)
    p = num_classes_of(clients)
    d = clients[0].graph.feature_dim
    init_rng = np.random.default_rng((cfg.seed, 101))

    if method == "fed-mlp":
        bcs = [_BaselineClient(c, "mlp", None) for c in clients]
    elif method in ("fed-gnnk", "fed-gnn", "local-gnnk"):
        use_knn = method in ("fed-gnnk", "local-gnnk")
        bcs = [_BaselineClient(c, "gcn", _baseline_structure(c, cfg, use_knn)) for c in clients]
    elif method in ("fed-gnnmlp", "fedproto"):
        bcs = []
        for c in clients:
            if c.graphless:
                bcs.append(_BaselineClient(c, "mlp", None))
            else:
                bcs.append(_BaselineClient(c, "gcn", _baseline_structure(c, cfg, False)))
    else:  # pragma: no cover - guarded above
        raise ConfigError(method)

    federated = method in ("fed-mlp", "fed-gnnmlp", "fed-gnnk", "fed-gnn")
    if federated:
        global_gcn = init_gcn_params(d, cfg.hidden, p, init_rng) if any(b.kind == "gcn" for b in bcs) else None
        global_mlp = init_mlp_params(d, cfg.hidden, p, init_rng) if any(b.kind == "mlp" for b in bcs) else None
    else:
        for b in bcs:
            crng = np.random.default_rng((cfg.seed, 202, b.client.client_id))
            if b.kind == "gcn":
                b.params = init_gcn_params(d, cfg.hidden, p, crng)
            else:
                b.params = init_mlp_params(d, cfg.hidden, p, crng)
            b.opt = make_optimizer(cfg.optimizer, b.params)
        global_gcn = global_mlp = None

    global_protos: dict[int, np.ndarray] = {}
    rounds: list[RoundMetrics] = []
    for r in range(1, cfg.rounds + 1):
        t0 = time.perf_counter()

        if federated:
            def local(bc: _BaselineClient):
                if bc.kind == "gcn":
                    params = global_gcn.copy()
                    _gcn_epochs(params, make_optimizer(cfg.optimizer, params), bc.client, bc.s, cfg)
                else:
                    params = global_mlp.copy()
                    _mlp_epochs(params, make_optimizer(cfg.optimizer, params), bc.client, cfg)
                return params

            uploads = _map_clients(local, bcs, cfg.workers)
            gcn_pairs = [(u, b.client.graph.n) for u, b in zip(uploads, bcs) if b.kind == "gcn"]
            mlp_pairs = [(u, b.client.graph.n) for u, b in zip(uploads, bcs) if b.kind == "mlp"]
            if gcn_pairs:
                global_gcn = fedavg_aggregate([u for u, _ in gcn_pairs], [w for _, w in gcn_pairs])
            if mlp_pairs:
                global_mlp = fedavg_aggregate([u for u, _ in mlp_pairs], [w for _, w in mlp_pairs])
            per_client = [
                _client_metrics(b.client, _baseline_logits(b, global_gcn if b.kind == "gcn" else global_mlp))
                for b in bcs
            ]
        elif method == "fedproto":
            protos_in = dict(global_protos)

            def local_proto(bc: _BaselineClient):
                if bc.kind == "gcn":
                    _gcn_epochs(bc.params, bc.opt, bc.client, bc.s, cfg, global_protos=protos_in)
                    emb = gcn_forward(bc.client.graph.x, bc.s, bc.params).z
                else:
                    _mlp_epochs(bc.params, bc.opt, bc.client, cfg, global_protos=protos_in)
                    emb = mlp_forward(bc.client.graph.x, bc.params).enc.h
                return compute_prototypes(emb, bc.client.graph.labels, bc.client.graph.train_mask)

            proto_sets = _map_clients(local_proto, bcs, cfg.workers)
            global_protos = aggregate_prototypes(proto_sets)
            per_client = [_client_metrics(b.client, _baseline_logits(b, b.params)) for b in bcs]
        else:  # local-gnnk: no communication at all
            _map_clients(lambda bc: _gcn_epochs(bc.params, bc.opt, bc.client, bc.s, cfg), bcs, cfg.workers)
            per_client = [_client_metrics(b.client, _baseline_logits(b, b.params)) for b in bcs]

        rounds.append(weighted_round_metrics(per_client, r, time.perf_counter() - t0))

    final: dict = {"clients": bcs}
    if federated:
        final.update({"gcn": global_gcn, "mlp": global_mlp})
    if method == "fedproto":
        final["prototypes"] = global_protos
    return FederationResult(rounds=rounds, final=final)
