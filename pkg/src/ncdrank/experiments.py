"""Graph perturbations and ranking comparisons.

Covers the desk-scale evaluation protocols: link-spam farms around a target
node, global edge sparsification, removal of incoming links of selected
nodes, and tie-corrected Kendall tau comparison of the induced orderings.
All perturbations are pure (the base graph is never modified) and driven by
a seeded 64-bit PCG64 generator (numpy's default_rng), so runs are
reproducible from the seed alone.

No plotting happens here; the CLI layer renders figures from the emitted
rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .decomposition import Decomposition
from .graph import SparseGraph


# ---------------------------------------------------------------------------
# Kendall tau (tie-corrected)

def _merge_count(arr: list) -> int:
    """Count inversions (pairs i<j with arr[i] > arr[j]) by merge sort."""
    n = len(arr)
    if n < 2:
        return 0
    work = list(arr)
    buf = [0] * n
    inversions = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if work[j] < work[i]:
                    buf[k] = work[j]
                    inversions += mid - i
                    j += 1
                else:
                    buf[k] = work[i]
                    i += 1
                k += 1
            buf[k:hi] = work[i:mid] if i < mid else work[j:hi]
            work[lo:hi] = buf[lo:hi]
        width *= 2
    return inversions


def _tie_count(sorted_vals: np.ndarray) -> int:
    """Sum of t(t-1)/2 over runs of equal values in a sorted array."""
    if sorted_vals.size < 2:
        return 0
    boundaries = np.flatnonzero(np.diff(sorted_vals) != 0)
    run_ends = np.concatenate([boundaries + 1, [sorted_vals.size]])
    run_starts = np.concatenate([[0], boundaries + 1])
    runs = run_ends - run_starts
    return int(np.sum(runs * (runs - 1) // 2))


def kendall_tau(a, b) -> float:
    """Tie-corrected Kendall correlation of two score vectors.

    Computed in O(n log n): sort by (a, b), count discordant pairs as merge
    sort inversions in the b-sequence, and apply the tie correction. Raises
    if either vector is constant (the correlation is undefined).
    """
    a = np.asarray(getattr(a, "pi", a), dtype=float)
    b = np.asarray(getattr(b, "pi", b), dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score vectors must be 1-d and of equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two scores")
    perm = np.lexsort((b, a))
    a_s, b_s = a[perm], b[perm]

    n0 = n * (n - 1) // 2
    ties_a = _tie_count(a_s)
    ties_b = _tie_count(np.sort(b))
    # joint ties: runs of equal (a, b) pairs in the lexicographic order
    joint_equal = (np.diff(a_s) == 0) & (np.diff(b_s) == 0)
    ties_both = 0
    run = 1
    for eq in joint_equal:
        if eq:
            run += 1
        else:
            ties_both += run * (run - 1) // 2
            run = 1
    ties_both += run * (run - 1) // 2

    if ties_a == n0 or ties_b == n0:
        raise ValueError("constant score vector: correlation undefined")

    discordant = _merge_count(b_s.tolist())
    con_minus_dis = n0 - ties_a - ties_b + ties_both - 2 * discordant
    return con_minus_dis / np.sqrt(float(n0 - ties_a) * float(n0 - ties_b))


# ---------------------------------------------------------------------------
# perturbations

def inject_spam_farm(g: SparseGraph, target: int, n_satellites: int) -> SparseGraph:
    """Add a farm of satellite nodes that link to and from the target.

    Each satellite's only out-link points at the target and its only in-link
    comes from the target, funneling rank towards it. Satellites get fresh
    labels and ids n..n+n_satellites-1; the base graph is unchanged.
    """
    if not (0 <= target < g.n):
        raise ValueError("target node out of range")
    if n_satellites < 0:
        raise ValueError("satellite count must be non-negative")
    if n_satellites == 0:
        return g
    labels = list(g.labels)
    new_ids = []
    k = 0
    for _ in range(n_satellites):
        while f"satellite_{k}" in g.label_to_id:
            k += 1
        labels.append(f"satellite_{k}")
        new_ids.append(len(labels) - 1)
        k += 1
    edges = list(map(tuple, g.edge_array()))
    for s in new_ids:
        edges.append((s, target))
        edges.append((target, s))
    return SparseGraph.from_edges(edges, labels=labels, n=len(labels))


def extend_blocks_to_satellites(d: Decomposition, g_new: SparseGraph,
                                target: int, n_old: int) -> Decomposition:
    """Map a decomposition onto a spam-farmed graph.

    Satellite nodes (ids >= n_old) inherit the target's block memberships,
    mirroring pages added under the spammer's own site.
    """
    satellites = np.arange(n_old, g_new.n)
    blocks = []
    target_blocks = set(d.blocks_of[target].tolist())
    for k, b in enumerate(d.blocks):
        if k in target_blocks:
            blocks.append(np.concatenate([b, satellites]))
        else:
            blocks.append(b)
    return Decomposition.from_blocks(g_new.n, blocks, block_labels=d.block_labels)


def sparsify(g: SparseGraph, keep_fraction: float, seed: int) -> SparseGraph:
    """Keep a uniform random sample of exactly round(keep_fraction * m) edges.

    The node set (and labels) stay fixed; only edges are dropped. The exact
    count (rather than independent coin flips) makes the kept fraction
    deterministic for a given seed.
    """
    if not (0.0 < keep_fraction <= 1.0):
        raise ValueError("keep_fraction must lie in (0, 1]")
    m = g.num_edges
    m_keep = int(round(keep_fraction * m))
    if m_keep >= m:
        return g
    rng = np.random.default_rng(seed)
    kept = rng.choice(m, size=m_keep, replace=False)
    edges = g.edge_array()[np.sort(kept)]
    return SparseGraph.from_edges(map(tuple, edges), labels=g.labels, n=g.n)


def remove_inlinks(g: SparseGraph, nodes, fraction: float, seed: int) -> SparseGraph:
    """Delete a random round(fraction * indegree) sample of each selected
    node's incoming edges."""
    if not (0.0 <= fraction <= 1.0):
        raise ValueError("fraction must lie in [0, 1]")
    nodes = np.asarray(list(nodes), dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("node set is empty")
    rng = np.random.default_rng(seed)
    edges = g.edge_array()
    drop = np.zeros(g.num_edges, dtype=bool)
    for u in nodes:
        incoming = np.flatnonzero(edges[:, 1] == u)
        k = int(round(fraction * incoming.size))
        if k:
            drop[rng.choice(incoming, size=k, replace=False)] = True
    kept = edges[~drop]
    return SparseGraph.from_edges(map(tuple, kept), labels=g.labels, n=g.n)


# ---------------------------------------------------------------------------
# experiment harness

@dataclass
class ReportRow:
    method: str
    perturbation_level: float
    repetition: int
    metric: str
    value: float


@dataclass
class ComparisonReport:
    kind: str
    rows: list[ReportRow]
    methods: list[str]
    seed: int

    def values(self, method: str, metric: str) -> dict[float, list[float]]:
        out: dict[float, list[float]] = {}
        for r in self.rows:
            if r.method == method and r.metric == metric:
                out.setdefault(r.perturbation_level, []).append(r.value)
        return out


def spam_experiment(g: SparseGraph, decomps: list[Decomposition], methods,
                    target: int, satellite_counts, seed: int = 0) -> ComparisonReport:
    """Score trajectory of a spam target as its farm grows.

    ``methods`` is a list of (name, solver) pairs, each solver a callable
    (graph, decomps) -> RankVector. Decompositions are remapped so the
    satellites join the target's blocks, and the factor matrices are rebuilt
    on the perturbed graph by the solver itself.
    """
    rows = []
    for count in satellite_counts:
        g_p = inject_spam_farm(g, target, int(count))
        d_p = [extend_blocks_to_satellites(d, g_p, target, g.n) for d in decomps]
        for name, solver in methods:
            res = solver(g_p, d_p)
            rows.append(ReportRow(method=name, perturbation_level=float(count),
                                  repetition=0, metric="target_score",
                                  value=float(res.pi[target])))
    return ComparisonReport(kind="spam", rows=rows,
                            methods=[n for n, _ in methods], seed=seed)


def sparsity_experiment(g: SparseGraph, decomps, methods, keep_levels,
                        reps: int = 10, seed: int = 0) -> ComparisonReport:
    """Ordering stability under global edge sparsification (Kendall tau
    between the base ranking and the ranking on the thinned graph)."""
    base = {name: solver(g, decomps) for name, solver in methods}
    rows = []
    for level in keep_levels:
        for rep in range(reps):
            g_p = sparsify(g, float(level), seed + 1000 * rep + int(level * 1e6) % 997)
            for name, solver in methods:
                res = solver(g_p, decomps)
                rows.append(ReportRow(method=name, perturbation_level=float(level),
                                      repetition=rep, metric="kendall_tau",
                                      value=float(kendall_tau(base[name], res))))
    return ComparisonReport(kind="sparsity", rows=rows,
                            methods=[n for n, _ in methods], seed=seed)


def newpages_experiment(g: SparseGraph, decomps, methods, node_count: int,
                        remove_fraction: float = 0.9, reps: int = 10,
                        seed: int = 0) -> ComparisonReport:
    """Ordering stability when most in-links of sampled nodes disappear,
    emulating newly added pages that have not yet been cited."""
    base = {name: solver(g, decomps) for name, solver in methods}
    candidates = np.flatnonzero(np.bincount(g.out_targets, minlength=g.n) > 0)
    if candidates.size == 0:
        raise ValueError("graph has no node with incoming links")
    rows = []
    for rep in range(reps):
        rng = np.random.default_rng(seed + rep)
        chosen = rng.choice(candidates, size=min(node_count, candidates.size),
                            replace=False)
        g_p = remove_inlinks(g, chosen, remove_fraction, seed + 31 * rep)
        for name, solver in methods:
            res = solver(g_p, decomps)
            rows.append(ReportRow(method=name, perturbation_level=remove_fraction,
                                  repetition=rep, metric="kendall_tau",
                                  value=float(kendall_tau(base[name], res))))
    return ComparisonReport(kind="newpages", rows=rows,
                            methods=[n for n, _ in methods], seed=seed)


def write_report_csv(path, report: ComparisonReport):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "perturbation_level", "repetition", "metric", "value"])
        for r in report.rows:
            w.writerow([r.method, f"{r.perturbation_level:g}", r.repetition,
                        r.metric, f"{r.value:.17g}"])
