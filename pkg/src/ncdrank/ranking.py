"""Random-surfer ranking operators and power-iteration solvers.

The ranking operator is assembled matrix-free:

    P = eta * H  +  sum_i mu_i * M_i  +  (1 - eta - sum_i mu_i) * E

where H is the row-normalized adjacency with dangling rows patched by the
configured strategy, each M_i = R_i A_i is an inter-level proximity matrix
kept in factored form, and E = 1 v^T teleports to v. A step multiplies a
probability row vector through P using only the sparse pieces:

    pi' = eta * pi^T H_ND  +  eta * (dangling mass routed per strategy)
        + sum_i mu_i * ((pi^T R_i) A_i)  +  (1 - eta - sum mu) * v^T

With the decomposition-aware dangling strategy, a dangling node's patch row
is its own inter-level row, so the dangling mass folds into the factored
term instead of a dense patch vector.

PageRank is the same kernel with an empty mu list; the damping-function
series baselines reuse the stochastic H step with eta = 1.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .decomposition import Decomposition, ProximityFactors, factors_for
from .graph import SparseGraph

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# strategy / teleport / config types

@dataclass(frozen=True)
class StronglyPreferential:
    """Dangling rows patched with the teleport vector v."""


@dataclass(frozen=True)
class WeaklyPreferential:
    """Dangling rows patched with a fixed distribution f."""

    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.ndim != 1 or np.any(f < 0) or abs(f.sum() - 1.0) > 1e-12:
            raise ValueError("weak-preferential patch must be a probability vector")
        object.__setattr__(self, "f", f)


@dataclass(frozen=True)
class NCDaware:
    """Dangling rows patched with the node's own inter-level proximity row.

    ``factors`` is only needed when the strategy is used without
    decomposition terms (plain PageRank); the decomposition-aware solver
    supplies its own factor list.
    """

    factors: tuple = ()


DanglingStrategy = StronglyPreferential | WeaklyPreferential | NCDaware


@dataclass(frozen=True)
class UniformNodes:
    """v = 1/n."""


@dataclass(frozen=True)
class BlockBalanced:
    """Rank split evenly between blocks, then evenly inside each block."""

    decomposition: Decomposition


@dataclass(frozen=True)
class Custom:
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


TeleportSpec = UniformNodes | BlockBalanced | Custom


@dataclass
class RankingConfig:
    eta: float = 0.85
    mus: tuple = (0.1,)
    teleport: TeleportSpec = field(default_factory=UniformNodes)
    dangling: DanglingStrategy = field(default_factory=NCDaware)
    tol: float = 1e-8
    max_iters: int = 1000

    def __post_init__(self):
        self.mus = tuple(float(m) for m in self.mus)
        if not (0.0 < self.eta <= 1.0):
            raise ValueError("eta must lie in (0, 1]")
        if any(m < 0 for m in self.mus):
            raise ValueError("mu weights must be non-negative")
        if self.eta + sum(self.mus) > 1.0 + 1e-12:
            raise ValueError("eta + sum(mus) must not exceed 1")

    @property
    def teleport_weight(self) -> float:
        return max(0.0, 1.0 - self.eta - sum(self.mus))

    @property
    def no_teleport_mode(self) -> bool:
        return abs(self.eta + sum(self.mus) - 1.0) <= 1e-12


@dataclass
class AggregateInfo:
    """Metadata attached to rankings produced by the block-parallel solver."""

    L: int
    sizes: list[int]
    xi: np.ndarray
    iterations: list[int]


@dataclass
class RankVector:
    pi: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    residuals: np.ndarray
    aggregates: AggregateInfo | None = None


# ---------------------------------------------------------------------------
# teleport vectors

def teleport_vector(spec: TeleportSpec, g: SparseGraph,
                    d: Decomposition | None = None) -> np.ndarray:
    """Resolve a teleport specification to a probability vector over nodes."""
    if isinstance(spec, UniformNodes):
        return np.full(g.n, 1.0 / g.n)
    if isinstance(spec, BlockBalanced):
        dec = spec.decomposition if spec.decomposition is not None else d
        if dec is None:
            raise ValueError("block-balanced teleport needs a decomposition")
        v = np.zeros(g.n)
        for block in dec.blocks:
            v[block] += 1.0 / (dec.K * block.size)
        return v / v.sum()
    if isinstance(spec, Custom):
        v = np.asarray(spec.v, dtype=float)
        if v.shape != (g.n,):
            raise ValueError(f"custom teleport has length {v.size}, graph has {g.n} nodes")
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-12:
            raise ValueError("custom teleport must be a probability vector")
        return v
    raise TypeError(f"unknown teleport spec {spec!r}")


# ---------------------------------------------------------------------------
# the matrix-free step operator

def _hyperlink_matrix(g: SparseGraph) -> sp.csr_matrix:
    """Row-stochastic adjacency with all-zero rows for dangling nodes."""
    deg = g.out_degrees
    src = np.repeat(np.arange(g.n), deg)
    data = 1.0 / deg[src] if src.size else np.empty(0)
    return sp.csr_matrix((data, g.out_targets, g.out_offsets), shape=(g.n, g.n))


class StepOperator:
    """Applies pi -> pi^T P for one fixed model instance.

    Optionally splits the hyperlink product across a thread pool; partial
    results are reduced in fixed chunk order so the output is bit-identical
    for any worker count.
    """

    def __init__(self, g: SparseGraph, factors: list[ProximityFactors],
                 cfg: RankingConfig, v: np.ndarray, workers: int = 1):
        if len(cfg.mus) != len(factors):
            raise ValueError("one mu weight per decomposition required")
        self.g = g
        self.factors = list(factors)
        self.cfg = cfg
        self.v = v
        self.dangling = g.dangling_mask.copy()
        self.H = _hyperlink_matrix(g)
        self.HT = self.H.T.tocsr()
        self.workers = max(1, int(workers))
        self._pool = None
        self._chunks = None
        if self.workers > 1 and g.n >= 2 * self.workers:
            bounds = np.linspace(0, g.n, self.workers + 1).astype(np.int64)
            self._chunks = [(int(a), int(b), self.H[int(a):int(b)].T.tocsr())
                            for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            self._pool = ThreadPoolExecutor(max_workers=self.workers)

        # which factor list routes the dangling mass under the
        # decomposition-aware strategy, and with what weights
        self._patch_factors: list[ProximityFactors] = []
        self._patch_weights: np.ndarray = np.empty(0)
        if isinstance(cfg.dangling, NCDaware):
            mu = sum(cfg.mus)
            if factors and mu > 0:
                self._patch_factors = list(factors)
                self._patch_weights = np.array(cfg.mus) / mu
            elif factors:
                self._patch_factors = list(factors)
                self._patch_weights = np.full(len(factors), 1.0 / len(factors))
            elif cfg.dangling.factors:
                fs = list(cfg.dangling.factors)
                self._patch_factors = fs
                self._patch_weights = np.full(len(fs), 1.0 / len(fs))
            elif np.any(self.dangling):
                raise ValueError("decomposition-aware dangling strategy needs factors")
            self._warn_absorbing()

    def _warn_absorbing(self):
        for f in self._patch_factors:
            d = f.decomposition
            for u in np.flatnonzero(self.dangling):
                if all(d.blocks[k].size == 1 for k in d.blocks_of[u]):
                    log.warning("dangling node %d sits only in singleton blocks; "
                                "its patched row is a self-loop (absorbing when "
                                "teleportation is off)", u)

    def _hyperlink_product(self, pi: np.ndarray) -> np.ndarray:
        if self._chunks is None:
            return self.HT @ pi
        parts = self._pool.map(lambda c: c[2] @ pi[c[0]:c[1]], self._chunks)
        out = np.zeros(self.g.n)
        for p in parts:  # fixed chunk order: deterministic reduction
            out += p
        return out

    def step(self, pi: np.ndarray) -> np.ndarray:
        """One multiplication pi^T P, renormalized."""
        y = self.step_raw(pi)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("non-finite values in power step")
        return y / y.sum()

    def step_raw(self, pi: np.ndarray) -> np.ndarray:
        """pi^T P without the final renormalization."""
        cfg = self.cfg
        y = cfg.eta * self._hyperlink_product(pi)

        dangling_mass = float(pi[self.dangling].sum())
        if dangling_mass > 0.0:
            if isinstance(cfg.dangling, StronglyPreferential):
                y += cfg.eta * dangling_mass * self.v
            elif isinstance(cfg.dangling, WeaklyPreferential):
                y += cfg.eta * dangling_mass * cfg.dangling.f
            else:
                pi_d = np.where(self.dangling, pi, 0.0)
                for w, f in zip(self._patch_weights, self._patch_factors):
                    y += (cfg.eta * w) * (f.A.T @ (f.R.T @ pi_d))

        for mu, f in zip(cfg.mus, self.factors):
            if mu > 0.0:
                y += mu * (f.A.T @ (f.R.T @ pi))

        tw = cfg.teleport_weight
        if tw > 0.0:
            y += tw * self.v
        return y

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def apply_step(pi: np.ndarray, g: SparseGraph, factors: list[ProximityFactors],
               cfg: RankingConfig, v: np.ndarray | None = None) -> np.ndarray:
    """One-off power step (builds a fresh operator; solvers keep their own)."""
    if v is None:
        d0 = factors[0].decomposition if factors else None
        v = teleport_vector(cfg.teleport, g, d0)
    op = StepOperator(g, factors, cfg, v)
    try:
        return op.step(np.asarray(pi, dtype=float))
    finally:
        op.close()


# ---------------------------------------------------------------------------
# solvers

def _power_iterate(op: StepOperator, cfg: RankingConfig) -> RankVector:
    n = op.g.n
    pi = np.full(n, 1.0 / n)
    residuals = []
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        nxt = op.step(pi)
        r = float(np.abs(nxt - pi).sum())
        residuals.append(r)
        pi = nxt
        if r < cfg.tol:
            converged = True
            break
    return RankVector(pi=pi, iterations=iterations,
                      final_residual=residuals[-1] if residuals else 0.0,
                      converged=converged, residuals=np.array(residuals))


def _resolve_factors(g: SparseGraph, decomps) -> list[ProximityFactors]:
    out = []
    for d in decomps:
        out.append(d if isinstance(d, ProximityFactors) else factors_for(g, d))
    return out


def _check_teleport_positivity(cfg: RankingConfig, v: np.ndarray):
    if not cfg.no_teleport_mode and np.any(v <= 0.0):
        raise ValueError("teleport vector must be strictly positive unless "
                         "eta + sum(mus) = 1")


def ncdawarerank(g: SparseGraph, decomps, cfg: RankingConfig | None = None,
                 workers: int = 1) -> RankVector:
    """Decomposition-aware ranking by power iteration from the uniform start.

    ``decomps`` is a list of Decomposition or prebuilt ProximityFactors, one
    per entry of ``cfg.mus``. Non-convergence is reported in the result, not
    raised.
    """
    if cfg is None:
        cfg = RankingConfig()
    factors = _resolve_factors(g, decomps)
    d0 = factors[0].decomposition if factors else None
    v = teleport_vector(cfg.teleport, g, d0)
    _check_teleport_positivity(cfg, v)
    op = StepOperator(g, factors, cfg, v, workers=workers)
    try:
        return _power_iterate(op, cfg)
    finally:
        op.close()


def pagerank(g: SparseGraph, alpha: float = 0.85, v=None,
             strategy: DanglingStrategy | None = None,
             tol: float = 1e-8, max_iters: int = 1000,
             workers: int = 1) -> RankVector:
    """Classic ranking: the same kernel with no decomposition terms.

    ``v`` may be a TeleportSpec or a plain probability vector (None means
    uniform). The decomposition-aware dangling strategy needs its factor list
    attached (NCDaware(factors=...)) since no decomposition term carries one.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if strategy is None:
        strategy = StronglyPreferential()
    if v is None:
        spec: TeleportSpec = UniformNodes()
    elif isinstance(v, (UniformNodes, BlockBalanced, Custom)):
        spec = v
    else:
        spec = Custom(np.asarray(v, dtype=float))
    cfg = RankingConfig(eta=alpha, mus=(), teleport=spec, dangling=strategy,
                        tol=tol, max_iters=max_iters)
    vv = teleport_vector(spec, g)
    _check_teleport_positivity(cfg, vv)
    op = StepOperator(g, [], cfg, vv, workers=workers)
    try:
        return _power_iterate(op, cfg)
    finally:
        op.close()


# ---------------------------------------------------------------------------
# damping-function series baselines

def functional_rank(g: SparseGraph, psi, v=None,
                    strategy: DanglingStrategy | None = None,
                    max_terms: int = 200, tail_tol: float = 1e-10) -> RankVector:
    """Truncated series  pi = sum_k psi(k) (H^T)^k v  with stochastic H.

    psi maps a non-negative step count to a non-negative weight with finite
    sum (caller-asserted). The series is cut at ``max_terms`` or once the
    term's L1 mass (= psi(k), H being stochastic) drops below ``tail_tol``.
    The result is renormalized to sum 1.
    """
    if strategy is None:
        strategy = StronglyPreferential()
    if v is None:
        v = np.full(g.n, 1.0 / g.n)
    v = np.asarray(v, dtype=float)
    cfg = RankingConfig(eta=1.0, mus=(), teleport=Custom(v), dangling=strategy,
                        tol=0.0, max_iters=1)
    op = StepOperator(g, [], cfg, v)
    try:
        w = v.copy()
        total = np.zeros(g.n)
        k = 0
        terms = 0
        while terms < max_terms:
            weight = float(psi(k))
            if weight < 0:
                raise ValueError(f"damping function returned negative weight at k={k}")
            total += weight * w
            terms += 1
            if weight < tail_tol and k > 0:
                break
            w = op.step_raw(w)  # eta=1, teleport weight 0: pure H^T multiply
            k += 1
    finally:
        op.close()
    s = total.sum()
    if s <= 0:
        raise ValueError("damping series has zero total mass")
    return RankVector(pi=total / s, iterations=terms, final_residual=0.0,
                      converged=True, residuals=np.empty(0))


def psi_geometric(alpha: float):
    """PageRank weights (1 - alpha) alpha^k."""
    return lambda k: (1.0 - alpha) * alpha ** k


def psi_total(k: int) -> float:
    """TotalRank weights 1 / ((k+1)(k+2))."""
    return 1.0 / ((k + 1) * (k + 2))


def psi_linear(L: int = 10):
    """LinearRank weights 2(L-k) / (L(L+1)) for k < L, zero beyond."""
    def psi(k):
        return 2.0 * (L - k) / (L * (L + 1)) if k < L else 0.0
    return psi


def psi_hyper(beta: float = 3.0):
    """HyperRank weights proportional to (k+1)^(-beta), zeta-normalized."""
    from scipy.special import zeta
    z = float(zeta(beta))
    return lambda k: (k + 1.0) ** (-beta) / z


# ---------------------------------------------------------------------------
# convergence diagnostics

def convergence_ratio(residuals) -> float:
    """Geometric-fit estimate of the asymptotic residual contraction ratio.

    Uses the trailing half of the history (at least 4 consecutive ratios) and
    returns the geometric mean of successive residual quotients. The model
    guarantees the true ratio is at most eta + sum(mus).
    """
    r = np.asarray(residuals, dtype=float)
    if r.size < 5:
        raise ValueError("need at least 5 residuals to estimate a ratio")
    tail = r[r.size // 2:]
    quotients = tail[1:] / tail[:-1]
    quotients = quotients[np.isfinite(quotients) & (quotients > 0)]
    if quotients.size == 0:
        return 0.0
    return float(np.exp(np.mean(np.log(quotients))))
