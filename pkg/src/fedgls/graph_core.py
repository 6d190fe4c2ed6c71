"""Graph construction, normalization, partitioning, and synthetic generation.

Produces the per-client graphs the federation consumes. All randomized
operations take explicit seeds; nothing touches global RNG state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DataError, ParameterError
from .numerics import as_matrix, cosine_sim_matrix


def _empty_mask() -> np.ndarray:
    return np.zeros(0, dtype=np.int64)


@dataclass(eq=False)
class Graph:
    """One client's attributed graph: features, optional edges, labels, splits.

    Edges are stored canonically as (m, 2) int64 with u < v, unique, and no
    self-loops; self-loops enter only at normalization time.
    """

    x: np.ndarray
    edges: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray = field(default_factory=_empty_mask)
    val_mask: np.ndarray = field(default_factory=_empty_mask)
    test_mask: np.ndarray = field(default_factory=_empty_mask)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def validate(self) -> None:
        x = as_matrix(self.x, "x")
        n = x.shape[0]
        if self.labels.shape != (n,):
            raise DataError(f"labels shape {self.labels.shape} != ({n},)")
        if np.any(self.labels < 0):
            raise DataError("labels must be nonnegative class indices")
        e = self.edges
        if e.ndim != 2 or (e.size and e.shape[1] != 2):
            raise DataError(f"edges must be (m, 2), got {e.shape}")
        if e.size:
            if e.min() < 0 or e.max() >= n:
                bad = int(e.max() if e.max() >= n else e.min())
                raise DataError(f"edge endpoint {bad} outside [0, {n})")
            if np.any(e[:, 0] >= e[:, 1]):
                raise DataError("edges must satisfy u < v (self-loops are not stored)")
            if np.unique(e, axis=0).shape[0] != e.shape[0]:
                raise DataError("duplicate edges")
        masks = [self.train_mask, self.val_mask, self.test_mask]
        seen: set[int] = set()
        for name, mask in zip(("train", "val", "test"), masks):
            if mask.size and (mask.min() < 0 or mask.max() >= n):
                raise DataError(f"{name} mask index outside [0, {n})")
            ids = set(int(i) for i in mask)
            if seen & ids:
                raise DataError("train/val/test masks overlap")
            seen |= ids

    def equals(self, other: "Graph") -> bool:
        return (
            self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(canonical_edges(self.edges, self.n), canonical_edges(other.edges, other.n))
            and np.array_equal(np.sort(self.train_mask), np.sort(other.train_mask))
            and np.array_equal(np.sort(self.val_mask), np.sort(other.val_mask))
            and np.array_equal(np.sort(self.test_mask), np.sort(other.test_mask))
        )


@dataclass
class Partition:
    """Community assignment over one graph's nodes, ids contiguous from 0."""

    assignment: np.ndarray
    num_communities: int

    @classmethod
    def from_assignment(cls, assignment: Iterable[int]) -> "Partition":
        arr = np.asarray(list(assignment) if not isinstance(assignment, np.ndarray) else assignment, dtype=np.int64)
        relabel: dict[int, int] = {}
        out = np.empty_like(arr)
        for i, c in enumerate(arr):
            c = int(c)
            if c not in relabel:
                relabel[c] = len(relabel)
            out[i] = relabel[c]
        return cls(assignment=out, num_communities=len(relabel))

    def members(self, c: int) -> np.ndarray:
        return np.nonzero(self.assignment == c)[0]


@dataclass
class SbmConfig:
    """Planted-partition generator settings for desk-scale synthetic data."""

    blocks: int
    nodes_per_block: int
    p_in: float
    p_out: float
    feature_dim: int = 16
    feature_signal: float = 1.0
    classes: int = 0  # 0 means one class per block

    def validate(self) -> None:
        if self.blocks < 1 or self.nodes_per_block < 1:
            raise ParameterError("blocks and nodes_per_block must be >= 1")
        if not (0.0 <= self.p_out <= self.p_in <= 1.0):
            raise ParameterError("need 0 <= p_out <= p_in <= 1")
        if self.feature_dim < 1:
            raise ParameterError("feature_dim must be >= 1")
        if self.classes < 0:
            raise ParameterError("classes must be >= 0")

    @property
    def num_classes(self) -> int:
        return self.classes if self.classes > 0 else self.blocks


def canonical_edges(pairs, n: int) -> np.ndarray:
    """Canonicalize an edge collection: u < v, self-loops dropped, unique, sorted."""
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if arr.min() < 0 or arr.max() >= n:
        raise DataError(f"edge endpoint outside [0, {n})")
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    keep = lo != hi
    arr = np.stack([lo[keep], hi[keep]], axis=1)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(arr, axis=0)


def dense_adjacency(n: int, edges: np.ndarray) -> np.ndarray:
    """0/1 symmetric adjacency matrix from a canonical edge list."""
    a = np.zeros((n, n), dtype=np.float64)
    if edges.size:
        a[edges[:, 0], edges[:, 1]] = 1.0
        a[edges[:, 1], edges[:, 0]] = 1.0
    return a


def normalize_adjacency_from_edges(n: int, edges: np.ndarray, add_self_loops: bool = True) -> np.ndarray:
    """Symmetric degree normalization D^-1/2 (A [+ I]) D^-1/2.

    Without self-loops an isolated node produces a zero row rather than an
    error.
    """
    a = dense_adjacency(n, edges)
    if add_self_loops:
        a = a + np.eye(n)
    deg = a.sum(axis=1)
    inv_sqrt = np.where(deg > 0.0, 1.0 / np.sqrt(np.where(deg > 0.0, deg, 1.0)), 0.0)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def normalize_adjacency(g: Graph, add_self_loops: bool = True) -> np.ndarray:
    return normalize_adjacency_from_edges(g.n, g.edges, add_self_loops)


def subgraph(g: Graph, nodes: np.ndarray) -> Graph:
    """Induced subgraph on `nodes` (kept in ascending original-id order)."""
    nodes = np.sort(np.asarray(nodes, dtype=np.int64))
    index = -np.ones(g.n, dtype=np.int64)
    index[nodes] = np.arange(nodes.size)
    kept = []
    for u, v in g.edges:
        if index[u] >= 0 and index[v] >= 0:
            kept.append((index[u], index[v]))
    edges = canonical_edges(kept, nodes.size) if kept else np.zeros((0, 2), dtype=np.int64)

    def remap(mask: np.ndarray) -> np.ndarray:
        sel = index[mask]
        return np.sort(sel[sel >= 0])

    return Graph(
        x=g.x[nodes].copy(),
        edges=edges,
        labels=g.labels[nodes].copy(),
        train_mask=remap(g.train_mask),
        val_mask=remap(g.val_mask),
        test_mask=remap(g.test_mask),
    )


def knn_graph(x, k: int, metric: str = "euclidean") -> np.ndarray:
    """Union-symmetrized k-nearest-neighbor edges over feature rows.

    Ties break toward the lower node index, so the output is deterministic
    for duplicated rows.
    """
    x = as_matrix(x, "x")
    n = x.shape[0]
    if not 1 <= k < n:
        raise ParameterError(f"need 1 <= k < n, got k={k}, n={n}")
    if metric == "euclidean":
        sq = (x * x).sum(axis=1)
        dist = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(dist, 0.0, out=dist)
    elif metric == "cosine":
        dist = 1.0 - cosine_sim_matrix(x, x)
    else:
        raise ParameterError(f"unknown metric {metric!r}; expected euclidean or cosine")
    np.fill_diagonal(dist, np.inf)
    pairs = []
    for i in range(n):
        # stable sort keeps ascending index order among equal distances
        order = np.argsort(dist[i], kind="stable")
        for j in order[:k]:
            pairs.append((i, int(j)))
    return canonical_edges(pairs, n)


def modularity(g: Graph, assignment, resolution: float = 1.0) -> float:
    """Newman modularity of a node-to-community assignment on an unweighted graph."""
    assignment = np.asarray(assignment, dtype=np.int64)
    m = g.num_edges
    if m == 0:
        raise ParameterError("modularity undefined on an edgeless graph")
    deg = np.zeros(g.n, dtype=np.float64)
    intra: dict[int, float] = {}
    for u, v in g.edges:
        deg[u] += 1.0
        deg[v] += 1.0
        if assignment[u] == assignment[v]:
            c = int(assignment[u])
            intra[c] = intra.get(c, 0.0) + 1.0
    q = 0.0
    for c in np.unique(assignment):
        d_c = float(deg[assignment == c].sum())
        q += intra.get(int(c), 0.0) / m - resolution * (d_c / (2.0 * m)) ** 2
    return q


def _move_phase(adj: list[dict[int, float]], self_w: np.ndarray, rng, resolution: float):
    """Greedy local moves until no single move improves modularity.

    Returns (community array, whether anything moved). Every accepted move
    strictly increases modularity, so a phase can only raise it and must
    terminate.
    """
    nn = len(adj)
    strength = np.array([sum(adj[i].values()) + 2.0 * self_w[i] for i in range(nn)])
    m_total = sum(sum(d.values()) for d in adj) / 2.0 + self_w.sum()
    two_m_sq = 2.0 * m_total * m_total
    comm = np.arange(nn)
    comm_tot = strength.copy()
    comm_size = np.ones(nn, dtype=np.int64)
    order = [int(i) for i in rng.permutation(nn)]
    moved_any = False
    while True:
        moves = 0
        for i in order:
            ci = int(comm[i])
            k_i = float(strength[i])
            links: dict[int, float] = {}
            for j, w in adj[i].items():
                cj = int(comm[j])
                links[cj] = links.get(cj, 0.0) + w
            # detach i, then score candidate communities; an empty one scores 0
            comm_tot[ci] -= k_i
            comm_size[ci] -= 1
            best_c = ci
            best_s = links.get(ci, 0.0) / m_total - resolution * comm_tot[ci] * k_i / two_m_sq
            for c in sorted(links):
                if c == ci:
                    continue
                s = links[c] / m_total - resolution * comm_tot[c] * k_i / two_m_sq
                if s > best_s + 1e-12:
                    best_c, best_s = c, s
            if best_s < -1e-12:
                # strictly better off alone; a free id always exists in this case
                best_c = int(np.nonzero(comm_size == 0)[0][0])
            comm[i] = best_c
            comm_tot[best_c] += k_i
            comm_size[best_c] += 1
            if best_c != ci:
                moves += 1
        if moves == 0:
            break
        moved_any = True
    return comm, moved_any


def _aggregate(adj: list[dict[int, float]], self_w: np.ndarray, comm: np.ndarray):
    """Contract communities into super-nodes, preserving total weights."""
    labels = Partition.from_assignment(comm)
    cmap = labels.assignment
    nn = labels.num_communities
    new_adj: list[dict[int, float]] = [dict() for _ in range(nn)]
    new_self = np.zeros(nn)
    for i, d in enumerate(adj):
        ci = int(cmap[i])
        new_self[ci] += self_w[i]
        for j, w in d.items():
            if j < i:
                continue  # each undirected pair once
            cj = int(cmap[j])
            if ci == cj:
                new_self[ci] += w
            else:
                new_adj[ci][cj] = new_adj[ci].get(cj, 0.0) + w
                new_adj[cj][ci] = new_adj[cj].get(ci, 0.0) + w
    return new_adj, new_self, cmap


def louvain_partition(g: Graph, seed: int = 0, resolution: float = 1.0) -> Partition:
    """Two-phase greedy modularity maximization (local moves + contraction).

    Deterministic for a given seed, which only governs node visit order.
    """
    if g.num_edges == 0:
        raise ParameterError("louvain_partition requires at least one edge")
    rng = np.random.default_rng(seed)
    adj: list[dict[int, float]] = [dict() for _ in range(g.n)]
    for u, v in g.edges:
        adj[int(u)][int(v)] = adj[int(u)].get(int(v), 0.0) + 1.0
        adj[int(v)][int(u)] = adj[int(v)].get(int(u), 0.0) + 1.0
    self_w = np.zeros(g.n)
    assignment = np.arange(g.n)
    while True:
        comm, moved = _move_phase(adj, self_w, rng, resolution)
        if not moved:
            break
        adj, self_w, cmap = _aggregate(adj, self_w, comm)
        assignment = cmap[assignment]
        if len(adj) == 1:
            break
    return Partition.from_assignment(assignment)


def merge_small_communities(g: Graph, partition: Partition, min_size: int) -> Partition:
    """Fold communities smaller than min_size into their most-connected neighbor.

    A small community with no external edges joins the smallest other
    community. Stops when everything is >= min_size or one community is left.
    """
    assignment = partition.assignment.copy()
    while True:
        part = Partition.from_assignment(assignment)
        assignment = part.assignment
        sizes = np.bincount(assignment, minlength=part.num_communities)
        if part.num_communities <= 1:
            return part
        small = [c for c in range(part.num_communities) if sizes[c] < min_size]
        if not small:
            return part
        c = min(small, key=lambda c: (sizes[c], c))
        conn = np.zeros(part.num_communities)
        for u, v in g.edges:
            cu, cv = assignment[u], assignment[v]
            if cu == c and cv != c:
                conn[cv] += 1.0
            elif cv == c and cu != c:
                conn[cu] += 1.0
        if conn.sum() > 0:
            target = int(np.argmax(conn))
        else:
            others = [d for d in range(part.num_communities) if d != c]
            target = min(others, key=lambda d: (sizes[d], d))
        assignment = np.where(assignment == c, target, assignment)


def sbm_generate(cfg: SbmConfig, seed: int) -> Graph:
    """Sample a planted-partition graph with block-informative Gaussian features.

    Nodes are laid out block-contiguously (block b occupies
    [b*nodes_per_block, (b+1)*nodes_per_block)) and labeled block % classes.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    n = cfg.blocks * cfg.nodes_per_block
    block = np.repeat(np.arange(cfg.blocks), cfg.nodes_per_block)
    labels = block % cfg.num_classes

    same = block[:, None] == block[None, :]
    thresh = np.where(same, cfg.p_in, cfg.p_out)
    iu = np.triu_indices(n, k=1)
    draws = rng.random(iu[0].size)
    sel = draws < thresh[iu]
    edges = np.stack([iu[0][sel], iu[1][sel]], axis=1).astype(np.int64)

    means = _block_means(cfg.blocks, cfg.feature_dim)
    x = cfg.feature_signal * means[block] + rng.standard_normal((n, cfg.feature_dim))
    return Graph(x=x, edges=edges, labels=labels.astype(np.int64))


def _block_means(blocks: int, dim: int) -> np.ndarray:
    """Deterministic unit-scale block mean directions."""
    means = np.zeros((blocks, dim))
    if dim >= blocks:
        means[np.arange(blocks), np.arange(blocks)] = 1.0
    elif dim >= 2:
        angles = 2.0 * np.pi * np.arange(blocks) / blocks
        means[:, 0] = np.cos(angles)
        means[:, 1] = np.sin(angles)
    elif blocks > 1:
        means[:, 0] = np.linspace(-1.0, 1.0, blocks)
    return means


def split_masks(n: int, ratios: tuple[float, float, float] = (0.6, 0.2, 0.2), seed: int = 0):
    """Random disjoint train/val/test cover of [0, n); rounding residue goes to test."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must sum to 1, got {ratios}")
    if any(r < 0 for r in ratios):
        raise ParameterError("ratios must be nonnegative")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(np.floor(ratios[0] * n))
    n_val = int(np.floor(ratios[1] * n))
    train = np.sort(perm[:n_train]).astype(np.int64)
    val = np.sort(perm[n_train : n_train + n_val]).astype(np.int64)
    test = np.sort(perm[n_train + n_val :]).astype(np.int64)
    return train, val, test
