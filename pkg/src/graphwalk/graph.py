"""Typed link graphs: CSR adjacency, direction-mode transforms, snapshots."""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import DataError

EDGE_KINDS = ("H", "I", "C")
MODES = ("d", "u", "r")

ARTICLE = 0
CATEGORY = 1
NODE_KIND_NAMES = ("article", "category")

_MAGIC = b"GWKB1"


def parse_graph_spec(spec: str) -> list[tuple[str, str]]:
    """Parse a spec string like ``"Hr"`` or ``"HrCu"`` into (kind, mode) parts."""
    if not spec or len(spec) % 2 != 0:
        raise DataError(f"bad graph spec {spec!r}: expected pairs like 'Hr' or 'HrCu'")
    parts: list[tuple[str, str]] = []
    for i in range(0, len(spec), 2):
        kind, mode = spec[i], spec[i + 1]
        if kind not in EDGE_KINDS or mode not in MODES:
            raise DataError(f"bad graph spec {spec!r}: unknown part {kind + mode!r}")
        if (kind, mode) in parts:
            raise DataError(f"bad graph spec {spec!r}: duplicate part {kind + mode!r}")
        parts.append((kind, mode))
    return parts


class TypedGraph:
    """Immutable directed-arc adjacency over article/category nodes.

    Neighbor lists are sorted and duplicate-free, which fixes a deterministic
    iteration order for all downstream tie-breaking. Undirected and reciprocal
    variants store both arc directions explicitly, so ``n_arcs`` always counts
    directed arcs. Instances are safe to share across threads once built.
    """

    __slots__ = ("offsets", "neighbors", "kinds", "spec", "flags",
                 "_reverse", "_engine", "_non_isolated")

    def __init__(self, offsets, neighbors, kinds, spec="", flags=()):
        self.offsets = offsets        # int64[n+1]
        self.neighbors = neighbors    # int32[m], sorted within each row
        self.kinds = kinds            # uint8[n], ARTICLE or CATEGORY
        self.spec = spec
        self.flags = tuple(flags)
        self._reverse = None
        self._engine = None           # lazily attached by ppr
        self._non_isolated = None

    @classmethod
    def from_arcs(cls, n_nodes, src, dst, kinds=None, spec="", flags=()):
        """Build a graph from parallel src/dst arrays; duplicates collapse."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.shape != dst.shape:
            raise ValueError("src and dst must have the same length")
        if src.size:
            lo = min(src.min(), dst.min())
            hi = max(src.max(), dst.max())
            if lo < 0 or hi >= n_nodes:
                raise DataError(f"arc endpoint out of range for {n_nodes} nodes")
        keys = np.unique(src * np.int64(n_nodes) + dst)
        s = keys // n_nodes
        d = keys % n_nodes
        offsets = np.zeros(n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(s, minlength=n_nodes), out=offsets[1:])
        if kinds is None:
            kinds = np.zeros(n_nodes, dtype=np.uint8)
        return cls(offsets, d.astype(np.int32), np.asarray(kinds, dtype=np.uint8),
                   spec, flags)

    @property
    def n_nodes(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_arcs(self) -> int:
        return int(self.offsets[-1])

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def neighbors_of(self, u: int) -> np.ndarray:
        return self.neighbors[self.offsets[u]:self.offsets[u + 1]]

    def arc_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.repeat(np.arange(self.n_nodes, dtype=np.int64), self.out_degrees())
        return src, self.neighbors.astype(np.int64)

    def has_arc(self, a: int, b: int) -> bool:
        row = self.neighbors_of(a)
        i = np.searchsorted(row, b)
        return bool(i < len(row) and row[i] == b)

    def reverse(self) -> "TypedGraph":
        if self._reverse is None:
            src, dst = self.arc_arrays()
            rev = TypedGraph.from_arcs(self.n_nodes, dst, src, self.kinds,
                                       self.spec, self.flags)
            rev._reverse = self
            self._reverse = rev
        return self._reverse

    def in_neighbors_of(self, u: int) -> np.ndarray:
        return self.reverse().neighbors_of(u)

    def non_isolated_count(self) -> int:
        if self._non_isolated is None:
            with_out = np.flatnonzero(self.out_degrees() > 0)
            self._non_isolated = int(np.union1d(with_out, np.unique(self.neighbors)).size)
        return self._non_isolated


def _respec(spec: str, mode: str) -> str:
    if len(spec) == 2 and spec[0] in EDGE_KINDS:
        return spec[0] + mode
    return f"{mode}({spec})" if spec else ""


def to_undirected(g: TypedGraph) -> TypedGraph:
    """Symmetric closure: both arc directions for every connected pair."""
    src, dst = g.arc_arrays()
    return TypedGraph.from_arcs(g.n_nodes,
                                np.concatenate([src, dst]),
                                np.concatenate([dst, src]),
                                g.kinds, _respec(g.spec, "u"), g.flags)


def filter_reciprocal(g: TypedGraph) -> TypedGraph:
    """Keep an arc a->b only if b->a is also present; both directions kept."""
    src, dst = g.arc_arrays()
    n = np.int64(g.n_nodes)
    keys = src * n + dst
    rev = dst * n + src
    keep = np.isin(keys, rev, assume_unique=True)
    return TypedGraph.from_arcs(g.n_nodes, src[keep], dst[keep],
                                g.kinds, _respec(g.spec, "r"), g.flags)


def merge(graphs: list[TypedGraph]) -> TypedGraph:
    """Arc union of graphs over one shared node universe."""
    if not graphs:
        raise ValueError("merge needs at least one graph")
    base = graphs[0]
    for g in graphs[1:]:
        if g.n_nodes != base.n_nodes or not np.array_equal(g.kinds, base.kinds):
            raise DataError("cannot merge graphs over different node universes")
    srcs, dsts = [], []
    flags: list[str] = []
    for g in graphs:
        s, d = g.arc_arrays()
        srcs.append(s)
        dsts.append(d)
        flags.extend(f for f in g.flags if f not in flags)
    spec = "".join(g.spec for g in graphs)
    return TypedGraph.from_arcs(base.n_nodes, np.concatenate(srcs),
                                np.concatenate(dsts), base.kinds, spec, flags)


def stats(g: TypedGraph) -> dict:
    return {
        "spec": g.spec,
        "nodes": g.n_nodes,
        "non_isolated_nodes": g.non_isolated_count(),
        "arcs": g.n_arcs,
        "article_nodes": int((g.kinds == ARTICLE).sum()),
        "category_nodes": int((g.kinds == CATEGORY).sum()),
        "flags": list(g.flags),
    }


class NodeTable:
    """Dense node id <-> title mapping with node kinds."""

    def __init__(self, titles, kinds):
        self.titles = list(titles)
        self.kinds = np.asarray(kinds, dtype=np.uint8)
        self._by_title = {t: i for i, t in enumerate(self.titles)}

    def __len__(self) -> int:
        return len(self.titles)

    def id_of(self, title: str):
        return self._by_title.get(title)

    def title_of(self, node_id: int) -> str:
        return self.titles[node_id]


def load_nodes(path: str) -> NodeTable:
    """Read ``nodes.tsv`` (id, title, kind); ids must be dense and in order."""
    titles: list[str] = []
    kinds: list[int] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("id\t"):
            raise DataError(f"{path}: missing header line")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 columns")
            try:
                nid = int(cols[0])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad node id {cols[0]!r}") from None
            if nid != len(titles):
                raise DataError(f"{path}:{lineno}: node ids must be dense and ordered")
            if cols[2] not in NODE_KIND_NAMES:
                raise DataError(f"{path}:{lineno}: unknown node kind {cols[2]!r}")
            titles.append(cols[1])
            kinds.append(NODE_KIND_NAMES.index(cols[2]))
    return NodeTable(titles, kinds)


def load_edge_file(path: str, nodes: NodeTable, kind: str) -> TypedGraph:
    """Load one per-kind edge file as a directed graph over the node table."""
    n = len(nodes)
    src: list[int] = []
    dst: list[int] = []
    with open(path, encoding="utf-8") as fh:
        fh.readline()  # header
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns")
            try:
                a, b = int(cols[0]), int(cols[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad node id") from None
            if not (0 <= a < n and 0 <= b < n):
                raise DataError(f"{path}:{lineno}: edge ({a},{b}) references unknown node id")
            src.append(a)
            dst.append(b)
    return TypedGraph.from_arcs(n, np.array(src, dtype=np.int64),
                                np.array(dst, dtype=np.int64),
                                nodes.kinds, kind + "d")


def build_graph(spec: str, edges_dir: str, nodes: NodeTable) -> TypedGraph:
    """Assemble a graph from per-kind edge files according to a spec string.

    Reciprocal filtering of category/infobox parts is permitted but marked
    with an ``experimental:`` flag since those graphs are typically too
    sparse to be useful.
    """
    parts = parse_graph_spec(spec)
    built: list[TypedGraph] = []
    for kind, mode in parts:
        g = load_edge_file(os.path.join(edges_dir, f"edges.{kind}.tsv"), nodes, kind)
        if mode == "u":
            g = to_undirected(g)
        elif mode == "r":
            g = filter_reciprocal(g)
            if kind != "H":
                g = TypedGraph(g.offsets, g.neighbors, g.kinds, g.spec,
                               g.flags + (f"experimental:{kind}r",))
        built.append(g)
    return merge(built) if len(built) > 1 else built[0]


def save_snapshot(g: TypedGraph, path: str) -> None:
    """Write the binary snapshot: header, offsets, neighbors, kind bitmap, spec."""
    spec_b = g.spec.encode("utf-8")
    flags_b = "\n".join(g.flags).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQ", g.n_nodes, g.n_arcs))
        fh.write(g.offsets.astype("<i8").tobytes())
        fh.write(g.neighbors.astype("<i4").tobytes())
        fh.write(np.packbits(g.kinds, bitorder="little").tobytes())
        fh.write(struct.pack("<I", len(spec_b)))
        fh.write(spec_b)
        fh.write(struct.pack("<I", len(flags_b)))
        fh.write(flags_b)


def load_snapshot(path: str) -> TypedGraph:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise DataError(f"{path}: not a graph snapshot")
        n, m = struct.unpack("<QQ", fh.read(16))
        offsets = np.frombuffer(fh.read((n + 1) * 8), dtype="<i8").astype(np.int64)
        neighbors = np.frombuffer(fh.read(m * 4), dtype="<i4").astype(np.int32)
        bitmap = np.frombuffer(fh.read((n + 7) // 8), dtype=np.uint8)
        kinds = np.unpackbits(bitmap, bitorder="little", count=n).astype(np.uint8)
        (spec_len,) = struct.unpack("<I", fh.read(4))
        spec = fh.read(spec_len).decode("utf-8")
        (flags_len,) = struct.unpack("<I", fh.read(4))
        flags = tuple(s for s in fh.read(flags_len).decode("utf-8").split("\n") if s)
    if len(offsets) != n + 1 or len(neighbors) != m or offsets[-1] != m:
        raise DataError(f"{path}: truncated or corrupt snapshot")
    return TypedGraph(offsets, neighbors, kinds, spec, flags)
