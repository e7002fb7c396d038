"""Block decompositions, proximal sets, and the R/A factor machinery.

A decomposition is an indexed family of non-empty, possibly overlapping node
blocks covering the whole graph. From it and the graph we derive, per node u,
the proximal set (the blocks containing u or any of its out-neighbors) and the
two sparse row-stochastic factors

    R (n x K): row u uniform over u's proximal blocks,
    A (K x n): row k uniform over block k's members,

whose product is the inter-level proximity matrix, never materialized at
scale. The K x K indicator W = A R carries the irreducibility information that
decides primitivity of the teleport-free ranking operator.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import ComponentLabeling, SparseGraph, strongly_connected_components


class DecompositionError(ValueError):
    """Raised for invalid block structures or block-file input."""


@dataclass
class Decomposition:
    """Indexed family of non-empty node blocks covering 0..n-1."""

    n: int
    K: int
    blocks: list[np.ndarray]          # per block: sorted unique member ids
    blocks_of: list[np.ndarray]       # per node: sorted unique containing block ids
    block_labels: list[str]

    @classmethod
    def from_blocks(cls, n: int, blocks, block_labels=None) -> "Decomposition":
        cleaned = []
        for k, members in enumerate(blocks):
            arr = np.unique(np.asarray(list(members), dtype=np.int64))
            if arr.size == 0:
                raise DecompositionError(f"block {k} is empty")
            if arr[0] < 0 or arr[-1] >= n:
                raise DecompositionError(f"block {k} has out-of-range node id")
            cleaned.append(arr)
        K = len(cleaned)
        if K == 0:
            raise DecompositionError("decomposition has no blocks")
        per_node = [[] for _ in range(n)]
        for k, arr in enumerate(cleaned):
            for u in arr:
                per_node[u].append(k)
        for u in range(n):
            if not per_node[u]:
                raise DecompositionError(f"cover violated: node {u} belongs to no block")
        blocks_of = [np.array(ks, dtype=np.int64) for ks in per_node]
        if block_labels is None:
            block_labels = [str(k) for k in range(K)]
        return cls(n=n, K=K, blocks=cleaned, blocks_of=blocks_of,
                   block_labels=list(block_labels))

    def block_sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.blocks], dtype=np.int64)

    def is_partition(self) -> bool:
        return all(b.size == 1 for b in self.blocks_of)


@dataclass
class ProximalStructure:
    """Per-node proximal block sets and their counts N_u."""

    proximal_blocks: list[np.ndarray]
    N: np.ndarray


@dataclass
class ProximityFactors:
    """Sparse factor pair (R, A); their product is the inter-level matrix."""

    R: sp.csr_matrix
    A: sp.csr_matrix
    decomposition: Decomposition


@dataclass
class IndicatorMatrix:
    """K x K (or stacked) block-adjacency indicator, pattern is what matters."""

    W: sp.csr_matrix
    diagonal_positive: bool


@dataclass
class PrimitivityVerdict:
    primitive: bool
    witness: ComponentLabeling


@dataclass
class SufficientConditionVerdict:
    """Outcome of the two sufficient primitivity conditions.

    kind is 'condition_i' (some single indicator irreducible, index in
    ``indices``), 'condition_ii' (some cross product A_I R_J strictly
    positive, pair in ``indices``), or 'inconclusive'.
    """

    kind: str
    indices: tuple


def load_decomposition(source, g: SparseGraph) -> Decomposition:
    """Parse "node_label block_label" lines into a Decomposition.

    ``source`` is a path, a string of lines, or a text file object. '#' lines
    are comments. A node may appear on several lines (overlapping blocks).
    Unknown node labels and cover violations are hard errors.
    """
    if isinstance(source, (str, os.PathLike)) and not (isinstance(source, str) and "\n" in source):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = source.readlines()
        if lines and isinstance(lines[0], bytes):
            lines = [l.decode("utf-8") for l in lines]

    block_ids: dict[str, int] = {}
    block_labels: list[str] = []
    members: list[list[int]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DecompositionError(f"line {lineno}: expected 'node block', got {line!r}")
        node_label, blk_label = parts
        u = g.label_to_id.get(node_label)
        if u is None:
            raise DecompositionError(f"line {lineno}: unknown node label {node_label!r}")
        k = block_ids.get(blk_label)
        if k is None:
            k = len(block_labels)
            block_ids[blk_label] = k
            block_labels.append(blk_label)
            members.append([])
        members[k].append(u)
    if not block_labels:
        raise DecompositionError("empty decomposition file")
    return Decomposition.from_blocks(g.n, members, block_labels=block_labels)


def partition_by_host(g: SparseGraph) -> Decomposition:
    """Partition web-style labels by host prefix.

    The host is the label up to the first '/' (after an optional scheme
    '://'); labels without a '/' form singleton-host groups keyed by the whole
    label. Useful for building a site-level partition from URL node labels.
    """
    groups: dict[str, list[int]] = {}
    order: list[str] = []
    for u, label in enumerate(g.labels):
        body = label.split("://", 1)[-1]
        host = body.split("/", 1)[0]
        if host not in groups:
            groups[host] = []
            order.append(host)
        groups[host].append(u)
    return Decomposition.from_blocks(g.n, [groups[h] for h in order], block_labels=order)


def proximal_sets(g: SparseGraph, d: Decomposition) -> ProximalStructure:
    """Blocks containing each node or any of its out-neighbors."""
    if d.n != g.n:
        raise DecompositionError("decomposition node count does not match graph")
    prox = []
    N = np.empty(g.n, dtype=np.int64)
    for u in range(g.n):
        ks = set(d.blocks_of[u].tolist())
        for v in g.out_neighbors(u):
            ks.update(d.blocks_of[v].tolist())
        arr = np.array(sorted(ks), dtype=np.int64)
        prox.append(arr)
        N[u] = arr.size
    return ProximalStructure(proximal_blocks=prox, N=N)


def build_factors(p: ProximalStructure, d: Decomposition) -> ProximityFactors:
    """Assemble the sparse row-stochastic factors R (n x K) and A (K x n)."""
    n, K = d.n, d.K
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(p.N, out=indptr[1:])
    indices = np.concatenate(p.proximal_blocks) if n else np.empty(0, dtype=np.int64)
    data = np.concatenate([np.full(arr.size, 1.0 / arr.size) for arr in p.proximal_blocks]) \
        if n else np.empty(0)
    R = sp.csr_matrix((data, indices, indptr), shape=(n, K))

    sizes = d.block_sizes()
    a_indptr = np.zeros(K + 1, dtype=np.int64)
    np.cumsum(sizes, out=a_indptr[1:])
    a_indices = np.concatenate(d.blocks)
    a_data = np.concatenate([np.full(b.size, 1.0 / b.size) for b in d.blocks])
    A = sp.csr_matrix((a_data, a_indices, a_indptr), shape=(K, n))
    return ProximityFactors(R=R, A=A, decomposition=d)


def factors_for(g: SparseGraph, d: Decomposition) -> ProximityFactors:
    """Convenience: proximal sets + factor assembly in one call."""
    return build_factors(proximal_sets(g, d), d)


def inter_level_row(u: int, f: ProximityFactors) -> sp.csr_matrix:
    """Row u of the inter-level matrix, computed as R_u · A (1 x n sparse)."""
    return f.R.getrow(u) @ f.A


def indicator_matrix(f: ProximityFactors) -> IndicatorMatrix:
    """W = A R, the block-level adjacency indicator."""
    W = (f.A @ f.R).tocsr()
    diag = W.diagonal()
    return IndicatorMatrix(W=W, diagonal_positive=bool(np.all(diag > 0)))


def check_primitivity_single(w: IndicatorMatrix) -> PrimitivityVerdict:
    """Primitive iff the indicator's pattern is a single strongly connected
    component (the positive diagonal rules out periodicity)."""
    labeling = strongly_connected_components(w.W)
    return PrimitivityVerdict(primitive=labeling.component_count == 1, witness=labeling)


def stacked_indicator(fs: list[ProximityFactors]) -> IndicatorMatrix:
    """Stacked indicator for several decompositions over the same node set.

    W' = [A_1; ...; A_S] · [R_1 ... R_S]; the scalar decomposition weights are
    pattern-irrelevant and omitted.
    """
    if not fs:
        raise ValueError("need at least one factor pair")
    n = fs[0].R.shape[0]
    for f in fs:
        if f.R.shape[0] != n or f.A.shape[1] != n:
            raise ValueError("factor pairs are over different node sets")
    A_stack = sp.vstack([f.A for f in fs], format="csr")
    R_stack = sp.hstack([f.R for f in fs], format="csr")
    W = (A_stack @ R_stack).tocsr()
    diag = W.diagonal()
    return IndicatorMatrix(W=W, diagonal_positive=bool(np.all(diag > 0)))


def check_sufficient_conditions(fs: list[ProximityFactors]) -> SufficientConditionVerdict:
    """Cheap sufficient checks before falling back to the stacked indicator.

    Condition (i): some per-decomposition indicator is irreducible.
    Condition (ii): some cross product A_I R_J is entrywise positive.
    Both are sufficient, not necessary; 'inconclusive' does not mean
    non-primitive.
    """
    for i, f in enumerate(fs):
        if check_primitivity_single(indicator_matrix(f)).primitive:
            return SufficientConditionVerdict(kind="condition_i", indices=(i,))
    for i, fi in enumerate(fs):
        for j, fj in enumerate(fs):
            if i == j:
                continue
            cross = (fi.A @ fj.R).toarray()
            if np.all(cross > 0):
                return SufficientConditionVerdict(kind="condition_ii", indices=(i, j))
    return SufficientConditionVerdict(kind="inconclusive", indices=())
