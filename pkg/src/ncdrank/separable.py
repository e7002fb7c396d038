"""Block-level separability detection and the parallel aggregate solver.

When no hyperlink crosses from one group of blocks to another, the ranking
chain is lumpable with respect to those groups (the aggregates): the exact
aggregate-level chain is (eta + mu) I + (1 - eta - mu) 1 xi^T with
xi_I = sum of the teleport mass inside aggregate I, and its stationary
vector is xi itself. Each aggregate can therefore be ranked independently as
a smaller instance of the same model with the teleport vector renormalized,
and the global ranking is the xi-weighted concatenation. The same recipe
specializes to plain PageRank over weakly connected components when the
dangling patches stay inside their own component.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .decomposition import Decomposition, ProximityFactors, factors_for
from .graph import SparseGraph, weakly_connected_components
from .ranking import (AggregateInfo, BlockBalanced, Custom, DanglingStrategy,
                      NCDaware, RankingConfig, RankVector, StepOperator,
                      StronglyPreferential, UniformNodes, WeaklyPreferential,
                      _power_iterate, ncdawarerank, pagerank, teleport_vector)


@dataclass
class AggregatePartition:
    """Partition of nodes (and blocks) into separable aggregates."""

    L: int
    aggregate_of_node: np.ndarray
    aggregate_of_block: list[np.ndarray]   # one array per decomposition
    members: list[np.ndarray]


@dataclass
class NotSeparable:
    """Returned when an effective hyperlink crosses would-be aggregates."""

    witness: tuple
    reason: str


class SeparabilityError(ValueError):
    """Raised when a separable solve is requested on a non-separable model."""


def _union_find_aggregates(g: SparseGraph, decomps: list[Decomposition]) -> np.ndarray:
    """Components of the union graph: undirected hyperlink edges plus a
    clique over every block's members."""
    parent = np.arange(g.n, dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for u, v in zip(np.repeat(np.arange(g.n), g.out_degrees), g.out_targets):
        union(int(u), int(v))
    for d in decomps:
        for block in d.blocks:
            anchor = int(block[0])
            for u in block[1:]:
                union(anchor, int(u))

    roots = np.array([find(i) for i in range(g.n)])
    remap: dict[int, int] = {}
    agg = np.empty(g.n, dtype=np.int64)
    for i, r in enumerate(roots):
        if r not in remap:
            remap[r] = len(remap)
        agg[i] = remap[r]
    return agg


def detect_aggregates(g: SparseGraph, decomps,
                      strategy: DanglingStrategy | None = None):
    """Find the finest separable aggregate partition, or explain why none
    exists under the given dangling strategy.

    Returns an AggregatePartition or a NotSeparable witness. Hyperlink edges
    never cross by construction; only the dangling patch rows can, so the
    strategy decides the verdict: the decomposition-aware patch stays inside
    the node's own blocks and never breaks separability, while a
    strongly-preferential patch spans every aggregate with teleport mass and
    a weak patch spans its fixed support.
    """
    if strategy is None:
        strategy = NCDaware()
    decomps = [d.decomposition if isinstance(d, ProximityFactors) else d for d in decomps]
    agg = _union_find_aggregates(g, decomps)
    L = int(agg.max()) + 1 if g.n else 0
    dangling = g.dangling_nodes()

    if L > 1 and dangling.size:
        if isinstance(strategy, StronglyPreferential):
            d0 = int(dangling[0])
            other = int(np.flatnonzero(agg != agg[d0])[0])
            return NotSeparable(witness=(d0, other),
                               reason="strongly-preferential patch spans aggregates "
                                      "through the teleport vector")
        if isinstance(strategy, WeaklyPreferential):
            support = np.flatnonzero(strategy.f > 0)
            for d0 in dangling:
                crossing = support[agg[support] != agg[d0]]
                if crossing.size:
                    return NotSeparable(witness=(int(d0), int(crossing[0])),
                                       reason="weak-preferential patch support "
                                              "crosses aggregates")

    members = [np.flatnonzero(agg == a) for a in range(L)]
    agg_of_block = []
    for d in decomps:
        agg_of_block.append(np.array([agg[b[0]] for b in d.blocks], dtype=np.int64))
    return AggregatePartition(L=L, aggregate_of_node=agg,
                              aggregate_of_block=agg_of_block, members=members)


def coupling_bound(cfg: RankingConfig) -> float:
    """Proven upper bound on the maximum degree of coupling: the teleport
    weight 1 - eta - sum(mus)."""
    return cfg.teleport_weight


@dataclass
class LumpabilityReport:
    max_deviation: float
    rows_checked: int
    ok: bool


def verify_lumpability(g: SparseGraph, decomps, cfg: RankingConfig,
                       partition: AggregatePartition,
                       sample_rows=None, tol: float = 1e-12) -> LumpabilityReport:
    """Check the closed-form lumped transition probabilities row by row.

    For node i in aggregate k the mass into aggregate l must equal
    (1 - eta - mu) * sum_{j in B_l} v_j, plus an extra eta + mu on the
    diagonal l = k. Deviations beyond ``tol`` indicate a separability bug.
    """
    factors = [d if isinstance(d, ProximityFactors) else factors_for(g, d) for d in decomps]
    d0 = factors[0].decomposition if factors else None
    v = teleport_vector(cfg.teleport, g, d0)
    op = StepOperator(g, factors, cfg, v)
    tw = cfg.teleport_weight
    stay = cfg.eta + sum(cfg.mus)
    agg_v = np.array([v[m].sum() for m in partition.members])
    rows = range(g.n) if sample_rows is None else sample_rows
    max_dev = 0.0
    count = 0
    try:
        for i in rows:
            e = np.zeros(g.n)
            e[i] = 1.0
            row = op.step_raw(e)
            for l in range(partition.L):
                got = float(row[partition.members[l]].sum())
                want = tw * agg_v[l]
                if l == partition.aggregate_of_node[i]:
                    want += stay
                max_dev = max(max_dev, abs(got - want))
            count += 1
    finally:
        op.close()
    return LumpabilityReport(max_deviation=max_dev, rows_checked=count,
                             ok=max_dev <= tol)


def _restrict_decomposition(d: Decomposition, nodes: np.ndarray,
                            new_id: np.ndarray) -> Decomposition:
    """Blocks intersected with a node subset, reindexed; empty blocks drop."""
    in_set = np.zeros(d.n, dtype=bool)
    in_set[nodes] = True
    blocks, labels = [], []
    for k, b in enumerate(d.blocks):
        kept = b[in_set[b]]
        if kept.size:
            blocks.append(new_id[kept])
            labels.append(d.block_labels[k])
    return Decomposition.from_blocks(nodes.size, blocks, block_labels=labels)


def _subgraph(g: SparseGraph, nodes: np.ndarray, new_id: np.ndarray) -> SparseGraph:
    in_set = np.zeros(g.n, dtype=bool)
    in_set[nodes] = True
    edges = []
    for u in nodes:
        for vtx in g.out_neighbors(int(u)):
            if in_set[vtx]:
                edges.append((new_id[u], new_id[vtx]))
    return SparseGraph.from_edges(edges, labels=[g.labels[int(u)] for u in nodes],
                                  n=nodes.size)


def _sub_strategy(strategy: DanglingStrategy, nodes: np.ndarray,
                  new_id: np.ndarray) -> DanglingStrategy:
    if isinstance(strategy, WeaklyPreferential):
        f_sub = strategy.f[nodes]
        s = f_sub.sum()
        if s <= 0:
            raise SeparabilityError("weak patch has no mass inside an aggregate "
                                    "that contains dangling nodes")
        return WeaklyPreferential(f_sub / s)
    if isinstance(strategy, NCDaware):
        return NCDaware()   # sub-factors come from the restricted decompositions
    return strategy


def solve_separable(g: SparseGraph, decomps, cfg: RankingConfig | None = None,
                    workers: int | None = None) -> RankVector:
    """Rank by independent per-aggregate solves plus the exact coupling.

    Each aggregate is solved as a smaller model with the same weights and
    the teleport vector renormalized to it; the pieces are concatenated with
    weights xi_I (the teleport mass of aggregate I). Results are written to
    disjoint slices in aggregate order, so output is identical for any
    worker count.
    """
    if cfg is None:
        cfg = RankingConfig()
    decomp_objs = [d.decomposition if isinstance(d, ProximityFactors) else d
                   for d in decomps]
    part = detect_aggregates(g, decomp_objs, cfg.dangling)
    if isinstance(part, NotSeparable):
        raise SeparabilityError(f"model is not separable: {part.reason} "
                                f"(witness edge {part.witness})")
    d0 = decomp_objs[0] if decomp_objs else None
    v = teleport_vector(cfg.teleport, g, d0)
    xi = np.array([v[m].sum() for m in part.members])
    if np.any(xi <= 0):
        bad = int(np.argmin(xi))
        raise SeparabilityError(f"aggregate {bad} has zero teleport mass; the "
                                "separable solve needs positive mass per aggregate")

    new_id = np.empty(g.n, dtype=np.int64)
    for m in part.members:
        new_id[m] = np.arange(m.size)

    def solve_one(a: int) -> RankVector:
        nodes = part.members[a]
        sub_g = _subgraph(g, nodes, new_id)
        sub_ds = [_restrict_decomposition(d, nodes, new_id) for d in decomp_objs]
        sub_cfg = RankingConfig(eta=cfg.eta, mus=cfg.mus,
                                teleport=Custom(v[nodes] / xi[a]),
                                dangling=_sub_strategy(cfg.dangling, nodes, new_id),
                                tol=cfg.tol, max_iters=cfg.max_iters)
        return ncdawarerank(sub_g, sub_ds, sub_cfg)

    order = sorted(range(part.L), key=lambda a: -part.members[a].size)
    results: list[RankVector | None] = [None] * part.L
    if workers is not None and workers > 1 and part.L > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for a, res in zip(order, pool.map(solve_one, order)):
                results[a] = res
    else:
        for a in order:
            results[a] = solve_one(a)

    pi = np.empty(g.n)
    iters, residuals = [], []
    converged = True
    for a in range(part.L):
        res = results[a]
        pi[part.members[a]] = xi[a] * res.pi
        iters.append(res.iterations)
        converged &= res.converged
        if res.residuals.size > len(residuals):
            residuals = list(res.residuals)
    info = AggregateInfo(L=part.L, sizes=[int(m.size) for m in part.members],
                         xi=xi, iterations=iters)
    return RankVector(pi=pi, iterations=max(iters), converged=converged,
                      final_residual=max(r.final_residual for r in results),
                      residuals=np.array(residuals), aggregates=info)


class ConfinementError(ValueError):
    """A dangling patch puts mass outside its node's weak component."""


def pagerank_confined(g: SparseGraph, alpha: float = 0.85, v=None,
                      strategy: DanglingStrategy | None = None,
                      tol: float = 1e-8, max_iters: int = 1000,
                      workers: int | None = None) -> RankVector:
    """PageRank solved independently per weakly connected component.

    Valid when every dangling node's patch row is supported inside its own
    component; then the components are exact aggregates with weights
    xi_I = teleport mass of component I.
    """
    if strategy is None:
        strategy = StronglyPreferential()
    if v is None:
        vv = np.full(g.n, 1.0 / g.n)
    elif isinstance(v, (UniformNodes, BlockBalanced, Custom)):
        vv = teleport_vector(v, g)
    else:
        vv = np.asarray(v, dtype=float)
    wcc = weakly_connected_components(g)
    dangling = g.dangling_nodes()

    if wcc.component_count > 1 and dangling.size:
        if isinstance(strategy, StronglyPreferential):
            for d0 in dangling:
                crossing = np.flatnonzero((vv > 0) &
                                          (wcc.component_of != wcc.component_of[d0]))
                if crossing.size:
                    raise ConfinementError("strongly-preferential patch leaves the "
                                           f"component of dangling node {int(d0)}")
        elif isinstance(strategy, WeaklyPreferential):
            support = np.flatnonzero(strategy.f > 0)
            for d0 in dangling:
                if np.any(wcc.component_of[support] != wcc.component_of[d0]):
                    raise ConfinementError("weak patch support leaves the component "
                                           f"of dangling node {int(d0)}")
        # the decomposition-aware patch targets the node's own blocks; blocks
        # that straddle components would already have merged them if they fed
        # the patch, so verify directly against the factor support
        elif isinstance(strategy, NCDaware):
            for f in strategy.factors:
                R, A = f.R.tocsr(), f.A.tocsr()
                for d0 in dangling:
                    row = (R.getrow(int(d0)) @ A).tocoo()
                    if np.any(wcc.component_of[row.col] != wcc.component_of[d0]):
                        raise ConfinementError("decomposition-aware patch leaves the "
                                               f"component of dangling node {int(d0)}")

    members = [np.flatnonzero(wcc.component_of == c) for c in range(wcc.component_count)]
    xi = np.array([vv[m].sum() for m in members])
    if np.any(xi <= 0):
        raise ConfinementError("a weak component has zero teleport mass")

    new_id = np.empty(g.n, dtype=np.int64)
    for m in members:
        new_id[m] = np.arange(m.size)

    def solve_one(c: int) -> RankVector:
        nodes = members[c]
        sub_g = _subgraph(g, nodes, new_id)
        sub_strategy = strategy
        if isinstance(strategy, WeaklyPreferential):
            sub_strategy = _sub_strategy(strategy, nodes, new_id)
        elif isinstance(strategy, NCDaware):
            sub_fs = tuple(factors_for(sub_g, _restrict_decomposition(
                f.decomposition, nodes, new_id)) for f in strategy.factors)
            sub_strategy = NCDaware(factors=sub_fs)
        return pagerank(sub_g, alpha=alpha, v=vv[nodes] / xi[c],
                        strategy=sub_strategy, tol=tol, max_iters=max_iters)

    results = [solve_one(c) for c in range(wcc.component_count)]
    pi = np.empty(g.n)
    for c, res in enumerate(results):
        pi[members[c]] = xi[c] * res.pi
    info = AggregateInfo(L=wcc.component_count, sizes=[int(m.size) for m in members],
                         xi=xi, iterations=[r.iterations for r in results])
    return RankVector(pi=pi, iterations=max(r.iterations for r in results),
                      final_residual=max(r.final_residual for r in results),
                      converged=all(r.converged for r in results),
                      residuals=max((r.residuals for r in results), key=len),
                      aggregates=info)
