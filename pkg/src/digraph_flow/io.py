"""JSON-lines graph files and dataset manifests."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import ParseError
from .graph import DiGraph


def graph_to_record(g: DiGraph) -> dict:
    return {
        "n": g.num_nodes,
        "x": [int(c) for c in g.node_types],
        "e": [[i, j, c] for i, j, c in g.arcs()],
    }


def record_to_graph(rec, num_edge_classes=None, line=None) -> DiGraph:
    if not isinstance(rec, dict):
        raise ParseError("record is not a JSON object", line)
    for key in ("n", "x", "e"):
        if key not in rec:
            raise ParseError(f'missing "{key}" field', line)
    n = rec["n"]
    if not isinstance(n, int) or n < 0:
        raise ParseError(f'"n" must be a non-negative integer, got {n!r}', line)
    x = rec["x"]
    if not isinstance(x, list) or len(x) != n:
        raise ParseError(f'"x" must list {n} node classes', line)
    if any(not isinstance(c, int) or c < 0 for c in x):
        raise ParseError('"x" entries must be non-negative integers', line)
    e = np.zeros((n, n), dtype=np.int64)
    for arc in rec["e"]:
        if not isinstance(arc, list) or len(arc) != 3 or not all(isinstance(v, int) for v in arc):
            raise ParseError(f"arc {arc!r} is not an [i, j, c] integer triple", line)
        i, j, c = arc
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ParseError(f"arc {arc!r} has invalid endpoints", line)
        if c < 1 or (num_edge_classes is not None and c >= num_edge_classes):
            raise ParseError(f"arc {arc!r} has invalid class", line)
        e[i, j] = c
    return DiGraph(np.asarray(x, dtype=np.int64), e)


def write_graphs(graphs, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps(graph_to_record(g), separators=(",", ":")))
            fh.write("\n")


def read_graphs(path, num_edge_classes=None) -> list[DiGraph]:
    graphs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            graphs.append(record_to_graph(rec, num_edge_classes, lineno))
    return graphs


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid manifest JSON: {exc.msg}", exc.lineno) from exc
    for key in ("name", "X", "E", "splits"):
        if key not in manifest:
            raise ParseError(f'manifest missing "{key}"')
    return manifest


def resolve_split(manifest: dict, manifest_path, split: str) -> Path:
    """Split paths are stored relative to the manifest's directory."""
    p = Path(manifest["splits"][split])
    if not p.is_absolute():
        p = Path(os.path.dirname(os.path.abspath(manifest_path))) / p
    return p


def load_split(manifest_path, split: str) -> list[DiGraph]:
    manifest = read_manifest(manifest_path)
    return read_graphs(resolve_split(manifest, manifest_path, split), manifest["E"])
