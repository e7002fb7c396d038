"""Compressed sparse directed graphs and connectivity primitives.

Graphs are stored in CSR-like form: ``out_offsets`` (length n+1) indexes into
``out_targets``. Node labels are arbitrary strings mapped to dense 0-based ids
in first-appearance order, so loading the same file always yields the same
numbering. In-adjacency is built lazily, only the experiments that delete
incoming links need it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class GraphParseError(ValueError):
    """Raised for malformed edge-list input."""


@dataclass
class ComponentLabeling:
    """Assignment of nodes to components, ids contiguous in 0..count-1."""

    component_of: np.ndarray
    component_count: int
    component_sizes: np.ndarray

    def members(self, c):
        return np.flatnonzero(self.component_of == c)


@dataclass
class SparseGraph:
    """Immutable directed graph over dense node ids 0..n-1."""

    n: int
    out_offsets: np.ndarray
    out_targets: np.ndarray
    labels: list[str]
    label_to_id: dict[str, int]
    _in_offsets: np.ndarray | None = field(default=None, repr=False)
    _in_sources: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_edges(self) -> int:
        return int(self.out_offsets[-1])

    @property
    def out_degrees(self) -> np.ndarray:
        return np.diff(self.out_offsets)

    @property
    def dangling_mask(self) -> np.ndarray:
        return self.out_degrees == 0

    def dangling_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.dangling_mask)

    def out_neighbors(self, u: int) -> np.ndarray:
        return self.out_targets[self.out_offsets[u]:self.out_offsets[u + 1]]

    def edges(self):
        """Iterate (source, target) pairs in storage order."""
        for u in range(self.n):
            for v in self.out_neighbors(u):
                yield u, int(v)

    def edge_array(self) -> np.ndarray:
        """All edges as an (m, 2) int array in storage order."""
        src = np.repeat(np.arange(self.n), self.out_degrees)
        return np.column_stack([src, self.out_targets])

    def in_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """Lazily built (in_offsets, in_sources) transpose adjacency."""
        if self._in_offsets is None:
            m = self.num_edges
            counts = np.bincount(self.out_targets, minlength=self.n)
            offsets = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(counts, out=offsets[1:])
            sources = np.empty(m, dtype=np.int64)
            cursor = offsets[:-1].copy()
            src = np.repeat(np.arange(self.n), self.out_degrees)
            for e in range(m):
                t = self.out_targets[e]
                sources[cursor[t]] = src[e]
                cursor[t] += 1
            self._in_offsets = offsets
            self._in_sources = sources
        return self._in_offsets, self._in_sources

    def to_edge_lines(self) -> str:
        """Serialize back to edge-list text (storage order, labels preserved)."""
        out = []
        for u, v in self.edges():
            out.append(f"{self.labels[u]} {self.labels[v]}\n")
        return "".join(out)

    @classmethod
    def from_edges(cls, edges, labels=None, n=None) -> "SparseGraph":
        """Build from an iterable of (u, v) id pairs; deduplicates."""
        pairs = sorted({(int(u), int(v)) for u, v in edges})
        if n is None:
            n = max((max(u, v) for u, v in pairs), default=-1) + 1
            if labels is not None:
                n = max(n, len(labels))
        if labels is None:
            labels = [str(i) for i in range(n)]
        src = np.array([u for u, _ in pairs], dtype=np.int64)
        dst = np.array([v for _, v in pairs], dtype=np.int64)
        counts = np.bincount(src, minlength=n) if len(src) else np.zeros(n, dtype=np.int64)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(n=n, out_offsets=offsets, out_targets=dst,
                   labels=list(labels), label_to_id={l: i for i, l in enumerate(labels)})


def load_edge_list(source, comment: str = "#", delimiter: str | None = None) -> SparseGraph:
    """Parse an edge list into a SparseGraph.

    ``source`` may be a path, a string of lines, or a text file object. Each
    non-comment line holds two labels (source, target) split on whitespace or
    on ``delimiter`` if given. Duplicate edges are collapsed; self-loops kept;
    labels get dense ids in first-appearance order.
    """
    if isinstance(source, (str, os.PathLike)) and not (isinstance(source, str) and "\n" in source):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    elif isinstance(source, str):
        lines = source.splitlines(keepends=True)
    elif isinstance(source, bytes):
        lines = source.decode("utf-8").splitlines(keepends=True)
    else:
        lines = source.readlines()
        if lines and isinstance(lines[0], bytes):
            lines = [l.decode("utf-8") for l in lines]

    labels: list[str] = []
    label_to_id: dict[str, int] = {}

    def intern(label: str) -> int:
        i = label_to_id.get(label)
        if i is None:
            i = len(labels)
            label_to_id[label] = i
            labels.append(label)
        return i

    edges = []
    seen_payload = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or (comment and line.startswith(comment)):
            continue
        parts = line.split(delimiter) if delimiter else line.split()
        parts = [p for p in parts if p]
        if len(parts) != 2:
            raise GraphParseError(f"line {lineno}: expected 2 fields, got {len(parts)}: {line!r}")
        seen_payload = True
        edges.append((intern(parts[0]), intern(parts[1])))
    if not seen_payload:
        raise GraphParseError("empty edge list")
    return SparseGraph.from_edges(edges, labels=labels, n=len(labels))


def strongly_connected_components(pattern) -> ComponentLabeling:
    """Tarjan SCC labeling (iterative) of a graph or sparse pattern.

    Accepts a SparseGraph, a scipy sparse matrix (pattern of nonzeros), or an
    (n, offsets, targets) triple. Component ids are contiguous and assigned in
    the order components complete, which is deterministic for a fixed input.
    """
    n, offsets, targets = _as_pattern(pattern)
    index = np.full(n, -1, dtype=np.int64)
    lowlink = np.zeros(n, dtype=np.int64)
    on_stack = np.zeros(n, dtype=bool)
    comp = np.full(n, -1, dtype=np.int64)
    stack: list[int] = []
    next_index = 0
    ncomp = 0

    for root in range(n):
        if index[root] != -1:
            continue
        # work stack holds (node, next-edge-cursor)
        work = [(root, offsets[root])]
        index[root] = lowlink[root] = next_index
        next_index += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, ptr = work[-1]
            if ptr < offsets[v + 1]:
                work[-1] = (v, ptr + 1)
                w = int(targets[ptr])
                if index[w] == -1:
                    index[w] = lowlink[w] = next_index
                    next_index += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, offsets[w]))
                elif on_stack[w]:
                    if index[w] < lowlink[v]:
                        lowlink[v] = index[w]
            else:
                work.pop()
                if work:
                    parent = work[-1][0]
                    if lowlink[v] < lowlink[parent]:
                        lowlink[parent] = lowlink[v]
                if lowlink[v] == index[v]:
                    while True:
                        w = stack.pop()
                        on_stack[w] = False
                        comp[w] = ncomp
                        if w == v:
                            break
                    ncomp += 1
    sizes = np.bincount(comp, minlength=ncomp)
    return ComponentLabeling(component_of=comp, component_count=ncomp, component_sizes=sizes)


def weakly_connected_components(g: SparseGraph) -> ComponentLabeling:
    """Union-find labeling ignoring edge direction."""
    parent = np.arange(g.n, dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for u, v in zip(np.repeat(np.arange(g.n), g.out_degrees), g.out_targets):
        ru, rv = find(int(u)), find(int(v))
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)

    roots = np.array([find(i) for i in range(g.n)])
    # relabel roots to contiguous ids in first-appearance order
    _, comp = np.unique(roots, return_inverse=True)
    order = {}
    remap = np.empty(comp.max() + 1 if g.n else 0, dtype=np.int64)
    k = 0
    for c in comp:
        if c not in order:
            order[c] = k
            k += 1
    for c, i in order.items():
        remap[c] = i
    comp = remap[comp]
    sizes = np.bincount(comp, minlength=k)
    return ComponentLabeling(component_of=comp, component_count=k, component_sizes=sizes)


def _as_pattern(pattern):
    """Normalize the SCC input to an (n, offsets, targets) CSR triple."""
    if isinstance(pattern, SparseGraph):
        return pattern.n, pattern.out_offsets, pattern.out_targets
    if isinstance(pattern, tuple) and len(pattern) == 3:
        return pattern
    # scipy sparse (or anything with tocsr)
    csr = pattern.tocsr()
    if csr.shape[0] != csr.shape[1]:
        raise ValueError("SCC needs a square pattern")
    return csr.shape[0], csr.indptr, csr.indices
