"""Configuration, dataset ingestion, experiment orchestration, and metrics.

Dataset directory format (UTF-8, LF, tab-separated):

* ``nodes.tsv``   one node per line: ``id<TAB>label<TAB>f1,f2,...,fd`` with
  ids dense in 0..n-1 and features in decimal round-trip-safe form,
* ``edges.tsv``   one undirected edge per line: ``u<TAB>v`` with u < v, no
  duplicates, no self-loops,
* ``partition.tsv`` (optional) ``id<TAB>client`` covering every node; when
  absent the loader's caller partitions with Louvain.

Exit codes: 0 ok, 1 config error, 2 data error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, DataError, FedglsError
from .federation import (
    Client,
    FederationConfig,
    FederationResult,
    RoundMetrics,
    run_federation,
)
from .graph_core import (
    Graph,
    Partition,
    SbmConfig,
    canonical_edges,
    louvain_partition,
    merge_small_communities,
    sbm_generate,
    split_masks,
    subgraph,
)

_SBM_FIELDS = {f.name for f in dataclasses.fields(SbmConfig)}
_CONFIG_FIELDS = {f.name for f in dataclasses.fields(FederationConfig)}


# ---------------------------------------------------------------------------
# configuration


def _coerce(name: str, value, target_type):
    if target_type is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if target_type is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if target_type is str and isinstance(value, str):
        return value
    raise ConfigError(f"config key {name!r}: expected {target_type.__name__}, got {value!r}")


def _parse_sbm_table(table: dict) -> SbmConfig:
    unknown = set(table) - _SBM_FIELDS
    if unknown:
        raise ConfigError(f"unknown sbm keys: {sorted(unknown)}")
    try:
        return SbmConfig(**table)
    except TypeError as exc:
        raise ConfigError(f"incomplete sbm settings: {exc}") from exc


def parse_sbm_spec(spec: str) -> SbmConfig:
    """Parse the CLI form ``blocks=4,nodes_per_block=150,p_in=0.1,...``."""
    table: dict = {}
    for item in spec.split(","):
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"bad --sbm item {item!r}; expected key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in _SBM_FIELDS:
            raise ConfigError(f"unknown sbm key {key!r}")
        if key in ("blocks", "nodes_per_block", "feature_dim", "classes"):
            try:
                table[key] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"sbm key {key!r} needs an integer, got {raw!r}") from exc
        else:
            try:
                table[key] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"sbm key {key!r} needs a number, got {raw!r}") from exc
    return _parse_sbm_table(table)


def parse_config(path: Optional[str], overrides: Optional[dict] = None) -> FederationConfig:
    """Resolve a TOML file plus flag overrides into a validated config."""
    data: dict = {}
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(file, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
    merged = dict(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    unknown = set(merged) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    kwargs: dict = {}
    hints = {
        "method": str, "rounds": int, "local_epochs": int, "lr_gnn": float,
        "lr_encoder": float, "lr_learner": float, "tau": float, "k": int,
        "hidden": int, "graphless_ratio": float, "repeats": int, "seed": int,
        "dataset": str, "optimizer": str, "fedproto_lambda": float,
        "generator": str, "generator_activation": str, "knn_metric": str,
        "min_community_size": int, "workers": int, "out": str,
    }
    for key, value in merged.items():
        if key == "sbm":
            if isinstance(value, SbmConfig):
                kwargs[key] = value
            elif isinstance(value, str):
                kwargs[key] = parse_sbm_spec(value)
            elif isinstance(value, dict):
                kwargs[key] = _parse_sbm_table(value)
            else:
                raise ConfigError(f"config key 'sbm': expected a table, got {value!r}")
        elif key == "graphless_clients":
            if not isinstance(value, (list, tuple)) or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in value
            ):
                raise ConfigError("config key 'graphless_clients': expected a list of client ids")
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = _coerce(key, value, hints[key])
    cfg = FederationConfig(**kwargs)
    cfg.validate()
    return cfg


def resolved_config_dict(cfg: FederationConfig) -> dict:
    out = dataclasses.asdict(cfg)
    if cfg.sbm is not None:
        out["sbm"] = dataclasses.asdict(cfg.sbm)
    if cfg.graphless_clients is not None:
        out["graphless_clients"] = list(cfg.graphless_clients)
    return out


# ---------------------------------------------------------------------------
# dataset files


def _parse_int(raw: str, what: str, path: Path, line_no: int) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise DataError(f"{path.name} line {line_no}: {what} {raw!r} is not an integer") from exc


def load_dataset(directory) -> tuple[Graph, Optional[Partition]]:
    """Load and validate a dataset directory; returns (graph, partition-or-None)."""
    root = Path(directory)
    nodes_path = root / "nodes.tsv"
    edges_path = root / "edges.tsv"
    if not nodes_path.exists() or not edges_path.exists():
        raise DataError(f"dataset directory {root} must contain nodes.tsv and edges.tsv")

    ids: list[int] = []
    labels: list[int] = []
    feats: list[np.ndarray] = []
    with open(nodes_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"nodes.tsv line {line_no}: expected 3 tab-separated fields, got {len(parts)}")
            node_id = _parse_int(parts[0], "node id", nodes_path, line_no)
            label = _parse_int(parts[1], "label", nodes_path, line_no)
            if label < 0:
                raise DataError(f"nodes.tsv line {line_no}: negative label {label}")
            try:
                vec = np.array([float(v) for v in parts[2].split(",")], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"nodes.tsv line {line_no}: bad feature value ({exc})") from exc
            ids.append(node_id)
            labels.append(label)
            feats.append(vec)
    n = len(ids)
    if n == 0:
        raise DataError("nodes.tsv is empty")
    if sorted(ids) != list(range(n)):
        raise DataError("nodes.tsv ids must be dense 0..n-1 with no duplicates")
    dims = {v.size for v in feats}
    if len(dims) != 1:
        raise DataError(f"nodes.tsv feature widths differ: {sorted(dims)}")
    order = np.argsort(np.asarray(ids))
    x = np.stack([feats[i] for i in order])
    y = np.asarray([labels[i] for i in order], dtype=np.int64)

    known = set(range(n))
    pairs: list[tuple[int, int]] = []
    with open(edges_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"edges.tsv line {line_no}: expected 2 tab-separated fields")
            u = _parse_int(parts[0], "endpoint", edges_path, line_no)
            v = _parse_int(parts[1], "endpoint", edges_path, line_no)
            for e in (u, v):
                if e not in known:
                    raise DataError(f"edges.tsv line {line_no}: unknown node id {e}")
            if u >= v:
                raise DataError(f"edges.tsv line {line_no}: requires u < v, got {u} >= {v}")
            pairs.append((u, v))
    edges = canonical_edges(pairs, n) if pairs else np.zeros((0, 2), dtype=np.int64)
    if len(pairs) != edges.shape[0]:
        raise DataError("edges.tsv contains duplicate edges")

    graph = Graph(x=x, edges=edges, labels=y)
    graph.validate()

    partition = None
    part_path = root / "partition.tsv"
    if part_path.exists():
        assignment = -np.ones(n, dtype=np.int64)
        with open(part_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"partition.tsv line {line_no}: expected 2 tab-separated fields")
                node_id = _parse_int(parts[0], "node id", part_path, line_no)
                client = _parse_int(parts[1], "client id", part_path, line_no)
                if node_id not in known:
                    raise DataError(f"partition.tsv line {line_no}: unknown node id {node_id}")
                assignment[node_id] = client
        if np.any(assignment < 0):
            missing = int(np.nonzero(assignment < 0)[0][0])
            raise DataError(f"partition.tsv does not assign node {missing}")
        partition = Partition.from_assignment(assignment)
    return graph, partition


def write_dataset(directory, graph: Graph, partition: Optional[Partition] = None) -> None:
    """Emit the TSV format exactly (LF, decimal features via shortest round-trip repr)."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "nodes.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for i in range(graph.n):
            feats = ",".join(repr(float(v)) for v in graph.x[i])
            fh.write(f"{i}\t{int(graph.labels[i])}\t{feats}\n")
    with open(root / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u, v in graph.edges:
            fh.write(f"{int(u)}\t{int(v)}\n")
    if partition is not None:
        with open(root / "partition.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for i, c in enumerate(partition.assignment):
                fh.write(f"{i}\t{int(c)}\n")


# ---------------------------------------------------------------------------
# client construction


def build_clients(cfg: FederationConfig, master_seed: int) -> list[Client]:
    """Materialize per-client graphs with splits and the graphless selection."""
    if (cfg.dataset is None) == (cfg.sbm is None):
        raise ConfigError("exactly one of dataset or sbm must be configured")
    if cfg.sbm is not None:
        full = sbm_generate(cfg.sbm, seed=(master_seed, 1))
        assignment = np.arange(full.n) // cfg.sbm.nodes_per_block
        partition = Partition.from_assignment(assignment)
    else:
        full, partition = load_dataset(cfg.dataset)
        if partition is None:
            num_classes = int(full.labels.max()) + 1
            min_size = cfg.min_community_size
            if min_size is None:
                min_size = cfg.hidden + num_classes
            partition = louvain_partition(full, seed=master_seed)
            partition = merge_small_communities(full, partition, min_size)

    num_clients = partition.num_communities
    if num_clients < 2:
        raise DataError(f"partition produced {num_clients} client(s); need at least 2")

    if cfg.graphless_clients is not None:
        graphless = set(cfg.graphless_clients)
        bad = [c for c in graphless if not 0 <= c < num_clients]
        if bad:
            raise ConfigError(f"graphless client ids out of range: {bad}")
    else:
        count = int(np.floor(cfg.graphless_ratio * num_clients))
        rng = np.random.default_rng((master_seed, 3))
        graphless = set(int(i) for i in rng.permutation(num_clients)[:count])

    clients = []
    for cid in range(num_clients):
        sub = subgraph(full, partition.members(cid))
        train, val, test = split_masks(sub.n, seed=(master_seed, 2, cid))
        sub.train_mask, sub.val_mask, sub.test_mask = train, val, test
        sub.validate()
        clients.append(Client(client_id=cid, graph=sub, graphless=cid in graphless))
    return clients


# ---------------------------------------------------------------------------
# metrics persistence


def _round_record(repeat: int, rm: RoundMetrics) -> dict:
    return {
        "repeat": repeat,
        "round": rm.round,
        "train_loss": rm.train_loss,
        "train_acc": rm.train_acc,
        "val_acc": rm.val_acc,
        "test_acc": rm.test_acc,
        "clients": [
            {
                "client": cm.client_id,
                "n": cm.n,
                "train_loss": cm.train_loss,
                "train_acc": cm.train_acc,
                "val_acc": cm.val_acc,
                "test_acc": cm.test_acc,
            }
            for cm in rm.clients
        ],
    }


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def write_metrics(runs: Sequence[Sequence[RoundMetrics]], cfg: FederationConfig, out_dir) -> None:
    """Write metrics.jsonl, summary.csv, resolved_config.json, timings.jsonl.

    metrics.jsonl carries no wall-clock data, so identical configs and seeds
    produce byte-identical files; timings live in their own sidecar.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "metrics.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for repeat, rounds in enumerate(runs):
            for rm in rounds:
                fh.write(json.dumps(_round_record(repeat, rm), sort_keys=True) + "\n")

    with open(out / "timings.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for repeat, rounds in enumerate(runs):
            for rm in rounds:
                fh.write(json.dumps({"repeat": repeat, "round": rm.round, "wall_time": rm.wall_time}) + "\n")

    finals_test = np.array([rounds[-1].test_acc for rounds in runs])
    finals_val = np.array([rounds[-1].val_acc for rounds in runs])
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["method", "repeats", "rounds", "local_epochs", "k", "graphless_ratio",
             "fedproto_lambda", "seed", "test_acc_mean", "test_acc_std",
             "val_acc_mean", "val_acc_std"]
        )
        writer.writerow(
            [cfg.method, len(runs), cfg.rounds, cfg.local_epochs, cfg.k,
             _g17(cfg.graphless_ratio), _g17(cfg.fedproto_lambda), cfg.seed,
             _g17(finals_test.mean()), _g17(finals_test.std()),
             _g17(finals_val.mean()), _g17(finals_val.std())]
        )

    with open(out / "resolved_config.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(resolved_config_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# experiment driver


def run_experiment(cfg: FederationConfig) -> list[FederationResult]:
    """Run cfg.repeats seeded repetitions and persist metrics to cfg.out."""
    cfg.validate()
    out_dir = cfg.out or "out"
    results: list[FederationResult] = []
    for repeat in range(cfg.repeats):
        rep_cfg = dataclasses.replace(cfg, seed=cfg.seed + repeat)
        clients = build_clients(rep_cfg, rep_cfg.seed)
        results.append(run_federation(rep_cfg, clients))
    write_metrics([res.rounds for res in results], cfg, out_dir)
    return results


# ---------------------------------------------------------------------------
# CLI


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedgls", description="Federated graph learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment (repeats x rounds) and write metrics")
    run_p.add_argument("--config", help="TOML config file; flags override file values")
    run_p.add_argument("--method", choices=sorted(set(["fedgls", "fed-mlp", "fed-gnnmlp", "fedproto",
                                                       "local-gnnk", "fed-gnnk", "fed-gnn"])))
    run_p.add_argument("--rounds", type=int)
    run_p.add_argument("--local-epochs", dest="local_epochs", type=int)
    run_p.add_argument("--graphless-ratio", dest="graphless_ratio", type=float)
    run_p.add_argument("--k", type=int)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--repeats", type=int)
    run_p.add_argument("--out", help="output directory (default: out)")
    run_p.add_argument("--dataset", help="dataset directory with nodes.tsv/edges.tsv")
    run_p.add_argument("--sbm", help="synthetic data spec, e.g. blocks=4,nodes_per_block=150,p_in=0.1,p_out=0.01")
    run_p.add_argument("--workers", type=int, help="thread pool size for client rounds (0 = serial)")

    val_p = sub.add_parser("validate", help="validate a dataset directory")
    val_p.add_argument("--dataset", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            graph, partition = load_dataset(args.dataset)
            info = {
                "nodes": graph.n,
                "features": graph.feature_dim,
                "edges": graph.num_edges,
                "classes": int(graph.labels.max()) + 1,
                "partition_clients": partition.num_communities if partition else None,
            }
            print(json.dumps(info, sort_keys=True))
            return 0
        overrides = {
            key: getattr(args, key)
            for key in ("method", "rounds", "local_epochs", "graphless_ratio", "k",
                        "seed", "repeats", "out", "dataset", "sbm", "workers")
        }
        cfg = parse_config(args.config, overrides)
        if cfg.dataset is None and cfg.sbm is None:
            raise ConfigError("provide --dataset DIR or --sbm SPEC (or set one in the config file)")
        results = run_experiment(cfg)
        final = results[-1].rounds[-1]
        print(f"done: method={cfg.method} repeats={cfg.repeats} rounds={cfg.rounds} "
              f"final_test_acc={final.test_acc:.4f} out={cfg.out or 'out'}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FedglsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"unexpected failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
