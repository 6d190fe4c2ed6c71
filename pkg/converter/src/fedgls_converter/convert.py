"""Convert public node-classification datasets into the fedgls TSV format.

Supported sources:

* ``cora`` / ``citeseer``  the classic ``<name>.content`` + ``<name>.cites``
  pair (string ids; citations referencing unknown papers are dropped and
  counted, which real CiteSeer needs),
* ``pubmed``  the Pubmed-Diabetes ``NODE.paper.tab`` / ``DIRECTED.cites.tab``
  pair (sparse TF-IDF attributes keyed by the header vocabulary),
* ``flickr``  the GraphSAINT layout: ``adj_full.npz`` (CSR arrays),
  ``feats.npy``, ``class_map.json``,
* ``ogbn-arxiv``  the raw CSV layout: ``edge.csv``, ``node-feat.csv``,
  ``node-label.csv`` (plain or gzipped, in the source dir or its ``raw/``).

Output: ``nodes.tsv`` (``id<TAB>label<TAB>f1,f2,...``), ``edges.tsv``
(``u<TAB>v``, u < v, deduplicated, no self-loops), and ``manifest.json``
with counts and sha256 checksums of the emitted files. Node order follows
the source's canonical index; features are not re-normalized.
"""
from __future__ import annotations

import argparse
import dataclasses
import gzip
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

DATASETS = ("cora", "citeseer", "pubmed", "flickr", "ogbn-arxiv")

# published statistics; node counts only where the public distribution is
# unambiguous (citeseer copies vary between 3312 and 3327 papers)
EXPECTED = {
    "cora": {"nodes": 2708, "feature_dim": 1433, "classes": 7},
    "citeseer": {"feature_dim": 3703, "classes": 6},
    "pubmed": {"nodes": 19717, "feature_dim": 500, "classes": 3},
    "flickr": {"nodes": 89250, "feature_dim": 500, "classes": 7},
    "ogbn-arxiv": {"nodes": 169343, "feature_dim": 128, "classes": 40},
}


class SourceError(ValueError):
    """The source files are missing or malformed."""


@dataclass
class Converted:
    x: np.ndarray
    labels: np.ndarray
    edges: np.ndarray  # (m, 2) canonical u < v
    dropped_edges: int = 0


@dataclass
class ConversionManifest:
    source: str
    nodes: int
    edges: int
    classes: int
    feature_dim: int
    dropped_edges: int
    checksums: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    matches_expected: bool = True

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def _canonical_edges(pairs, n: int) -> tuple[np.ndarray, int]:
    """Dedupe to u < v without self-loops; returns (edges, dropped count)."""
    dropped = 0
    seen = set()
    for u, v in pairs:
        if u == v:
            dropped += 1
            continue
        seen.add((min(u, v), max(u, v)))
    if not seen:
        return np.zeros((0, 2), dtype=np.int64), dropped
    arr = np.array(sorted(seen), dtype=np.int64)
    if arr.min() < 0 or arr.max() >= n:
        raise SourceError(f"edge endpoint outside [0, {n})")
    return arr, dropped


# ---------------------------------------------------------------------------
# planetoid-style .content/.cites (cora, citeseer)


def load_content_cites(src: Path, name: str) -> Converted:
    content = src / f"{name}.content"
    cites = src / f"{name}.cites"
    if not content.exists() or not cites.exists():
        raise SourceError(f"expected {content.name} and {cites.name} under {src}")

    ids: dict[str, int] = {}
    feats: list[np.ndarray] = []
    raw_labels: list[str] = []
    with open(content, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) < 3:
                raise SourceError(f"{content.name} line {line_no}: too few fields")
            pid, values, label = parts[0], parts[1:-1], parts[-1]
            if pid in ids:
                raise SourceError(f"{content.name} line {line_no}: duplicate paper id {pid}")
            ids[pid] = len(ids)
            try:
                feats.append(np.array([float(v) for v in values], dtype=np.float64))
            except ValueError as exc:
                raise SourceError(f"{content.name} line {line_no}: bad feature ({exc})") from exc
            raw_labels.append(label)
    if not ids:
        raise SourceError(f"{content.name} is empty")
    dims = {v.size for v in feats}
    if len(dims) != 1:
        raise SourceError(f"{content.name}: inconsistent feature widths {sorted(dims)}")

    classes = {name: i for i, name in enumerate(sorted(set(raw_labels)))}
    labels = np.array([classes[l] for l in raw_labels], dtype=np.int64)

    pairs = []
    dangling = 0
    with open(cites, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise SourceError(f"{cites.name}: expected 2 fields per line")
            a, b = parts
            if a not in ids or b not in ids:
                dangling += 1
                continue
            pairs.append((ids[a], ids[b]))
    edges, dropped = _canonical_edges(pairs, len(ids))
    return Converted(x=np.stack(feats), labels=labels, edges=edges, dropped_edges=dangling + dropped)


# ---------------------------------------------------------------------------
# pubmed tab files


def load_pubmed(src: Path) -> Converted:
    node_file = _find_one(src, ["*.NODE.paper.tab", "NODE.paper.tab"])
    cite_file = _find_one(src, ["*.DIRECTED.cites.tab", "DIRECTED.cites.tab"])

    with open(node_file, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3:
        raise SourceError(f"{node_file.name}: too short")
    vocab = []
    for token in lines[1].split("\t"):
        if token.startswith("numeric:"):
            vocab.append(token.split(":")[1])
    if not vocab:
        raise SourceError(f"{node_file.name}: no numeric attribute declarations on line 2")
    vindex = {w: i for i, w in enumerate(vocab)}

    ids: dict[str, int] = {}
    rows: list[np.ndarray] = []
    labels: list[int] = []
    for line_no, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        pid = parts[0]
        if pid in ids:
            raise SourceError(f"{node_file.name} line {line_no}: duplicate id {pid}")
        label = None
        vec = np.zeros(len(vocab))
        for tok in parts[1:]:
            if tok.startswith("label="):
                label = int(tok[len("label="):])
            elif "=" in tok:
                key, _, val = tok.partition("=")
                if key in vindex:
                    vec[vindex[key]] = float(val)
        if label is None:
            raise SourceError(f"{node_file.name} line {line_no}: missing label")
        ids[pid] = len(ids)
        rows.append(vec)
        labels.append(label - 1)  # source labels are 1-based

    pairs = []
    dangling = 0
    with open(cite_file, encoding="utf-8") as fh:
        for line in fh.read().splitlines()[2:]:
            if not line.strip():
                continue
            refs = [tok[len("paper:"):] for tok in line.split("\t") if tok.startswith("paper:")]
            if len(refs) != 2:
                continue
            if refs[0] not in ids or refs[1] not in ids:
                dangling += 1
                continue
            pairs.append((ids[refs[0]], ids[refs[1]]))
    edges, dropped = _canonical_edges(pairs, len(ids))
    return Converted(x=np.stack(rows), labels=np.array(labels, dtype=np.int64),
                     edges=edges, dropped_edges=dangling + dropped)


def _find_one(src: Path, patterns: list[str]) -> Path:
    for pattern in patterns:
        hits = sorted(src.rglob(pattern))
        if hits:
            return hits[0]
    raise SourceError(f"none of {patterns} found under {src}")


# ---------------------------------------------------------------------------
# GraphSAINT layout (flickr)


def load_graphsaint(src: Path) -> Converted:
    adj_path = src / "adj_full.npz"
    feat_path = src / "feats.npy"
    cmap_path = src / "class_map.json"
    for p in (adj_path, feat_path, cmap_path):
        if not p.exists():
            raise SourceError(f"missing {p.name} under {src}")
    with np.load(adj_path) as npz:
        try:
            indptr = npz["indptr"]
            indices = npz["indices"]
            shape = npz["shape"]
        except KeyError as exc:
            raise SourceError(f"{adj_path.name}: not a CSR archive ({exc})") from exc
    n = int(shape[0])
    x = np.load(feat_path).astype(np.float64)
    if x.shape[0] != n:
        raise SourceError(f"feats.npy rows {x.shape[0]} != adjacency size {n}")
    with open(cmap_path, encoding="utf-8") as fh:
        cmap = json.load(fh)
    labels = np.zeros(n, dtype=np.int64)
    for key, value in cmap.items():
        labels[int(key)] = int(value)
    pairs = []
    for i in range(n):
        for j in indices[indptr[i]:indptr[i + 1]]:
            pairs.append((i, int(j)))
    edges, dropped = _canonical_edges(pairs, n)
    return Converted(x=x, labels=labels, edges=edges, dropped_edges=dropped)


# ---------------------------------------------------------------------------
# OGB raw CSV layout (ogbn-arxiv)


def _ogb_csv(root: Path, stem: str) -> Path:
    for cand in (root / f"{stem}.csv", root / f"{stem}.csv.gz"):
        if cand.exists():
            return cand
    raise SourceError(f"missing {stem}.csv(.gz) under {root}")


def _read_csv(path: Path) -> np.ndarray:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return np.loadtxt(fh, delimiter=",", ndmin=2, dtype=np.float64)


def load_ogb_arxiv(src: Path) -> Converted:
    root = src / "raw" if (src / "raw").is_dir() else src
    feats = _read_csv(_ogb_csv(root, "node-feat"))
    labels = _read_csv(_ogb_csv(root, "node-label")).astype(np.int64).ravel()
    edge_raw = _read_csv(_ogb_csv(root, "edge")).astype(np.int64)
    if labels.size != feats.shape[0]:
        raise SourceError(f"label count {labels.size} != node count {feats.shape[0]}")
    edges, dropped = _canonical_edges([(int(u), int(v)) for u, v in edge_raw], feats.shape[0])
    return Converted(x=feats, labels=labels, edges=edges, dropped_edges=dropped)


# ---------------------------------------------------------------------------
# output


def write_tsv(out: Path, data: Converted) -> dict[str, str]:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "nodes.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for i in range(data.x.shape[0]):
            feats = ",".join(repr(float(v)) for v in data.x[i])
            fh.write(f"{i}\t{int(data.labels[i])}\t{feats}\n")
    with open(out / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u, v in data.edges:
            fh.write(f"{int(u)}\t{int(v)}\n")
    return {
        "nodes.tsv": hashlib.sha256((out / "nodes.tsv").read_bytes()).hexdigest(),
        "edges.tsv": hashlib.sha256((out / "edges.tsv").read_bytes()).hexdigest(),
    }


def convert(name: str, src, out) -> ConversionManifest:
    """Convert one dataset and emit nodes.tsv/edges.tsv/manifest.json."""
    if name not in DATASETS:
        raise ValueError(f"unknown dataset {name!r}; expected one of {DATASETS}")
    src = Path(src)
    out = Path(out)
    if not src.exists():
        raise SourceError(f"source directory {src} does not exist")
    if name in ("cora", "citeseer"):
        data = load_content_cites(src, name)
    elif name == "pubmed":
        data = load_pubmed(src)
    elif name == "flickr":
        data = load_graphsaint(src)
    else:
        data = load_ogb_arxiv(src)

    if np.any(data.labels < 0):
        raise SourceError("negative class index after conversion")
    checksums = write_tsv(out, data)
    expected = EXPECTED[name]
    actual = {
        "nodes": data.x.shape[0],
        "feature_dim": data.x.shape[1],
        "classes": int(data.labels.max()) + 1,
    }
    manifest = ConversionManifest(
        source=name,
        nodes=actual["nodes"],
        edges=int(data.edges.shape[0]),
        classes=actual["classes"],
        feature_dim=actual["feature_dim"],
        dropped_edges=data.dropped_edges,
        checksums=checksums,
        expected=dict(expected),
        matches_expected=all(actual[k] == v for k, v in expected.items()),
    )
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest.to_json() + "\n")
    return manifest


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="fedgls-convert",
                                     description="Convert public datasets to the fedgls TSV format")
    parser.add_argument("--name", required=True, choices=DATASETS)
    parser.add_argument("--src", required=True, help="directory holding the public distribution")
    parser.add_argument("--out", required=True, help="output directory for nodes.tsv/edges.tsv")
    args = parser.parse_args(argv)
    try:
        manifest = convert(args.name, args.src, args.out)
    except SourceError as exc:
        print(f"source error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(manifest.to_json())
    if not manifest.matches_expected:
        print("warning: converted counts do not match the published statistics", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
