"""Command-line surface.

Subcommands:
  rank        solve a ranking instance, write TSV scores + JSON manifest
  check       primitivity / separability verdicts as JSON
  lab         dense Markov-chain operations on CSV matrices
  experiment  perturbation studies (spam farm, sparsification, in-link loss)

Exit codes: 0 success (check: primitive), 1 check found the model reducible,
2 input error, 3 non-convergence, 4 primitivity precondition violated in
teleport-free mode.

The report path renders matplotlib figures next to the delimited output:
rank writes a residual curve PNG beside the TSV, experiment writes the
metric curves beside the CSV.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import ncdlab
from .decomposition import (DecompositionError, check_primitivity_single,
                            check_sufficient_conditions, factors_for,
                            indicator_matrix, load_decomposition,
                            stacked_indicator)
from .experiments import (ComparisonReport, newpages_experiment,
                          sparsity_experiment, spam_experiment,
                          write_report_csv)
from .graph import GraphParseError, load_edge_list
from .ranking import (BlockBalanced, Custom, NCDaware, RankingConfig,
                      StronglyPreferential, UniformNodes, WeaklyPreferential,
                      ncdawarerank, pagerank, functional_rank, psi_hyper,
                      psi_linear, psi_total, teleport_vector)
from .separable import NotSeparable, SeparabilityError, detect_aggregates, solve_separable

EXIT_OK = 0
EXIT_REDUCIBLE = 1
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3
EXIT_PRIMITIVITY = 4


class PrimitivityPreconditionError(ValueError):
    pass


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _workers(args) -> int:
    env = os.environ.get("NCDRANK_WORKERS")
    if env:
        return max(1, int(env))
    if getattr(args, "workers", None):
        return max(1, args.workers)
    return os.cpu_count() or 1


def _load_probability_vector(path: str, g) -> np.ndarray:
    """Read "node_label value" lines into a vector over graph nodes."""
    v = np.zeros(g.n)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'node value'")
            u = g.label_to_id.get(parts[0])
            if u is None:
                raise ValueError(f"{path}:{lineno}: unknown node {parts[0]!r}")
            v[u] = float(parts[1])
    s = v.sum()
    if s <= 0:
        raise ValueError(f"{path}: vector has no mass")
    return v / s


def _resolve_teleport(arg: str, g, decomps):
    if arg == "uniform":
        return UniformNodes()
    if arg == "blocks":
        if not decomps:
            raise ValueError("--teleport blocks needs at least one --blocks file")
        return BlockBalanced(decomps[0])
    if arg.startswith("file:"):
        return Custom(_load_probability_vector(arg[5:], g))
    raise ValueError(f"unknown teleport spec {arg!r}")


def _resolve_dangling(arg: str, g):
    if arg == "strong":
        return StronglyPreferential()
    if arg == "ncd":
        return NCDaware()
    if arg.startswith("weak:"):
        return WeaklyPreferential(_load_probability_vector(arg[5:], g))
    raise ValueError(f"unknown dangling strategy {arg!r}")


def _write_rank_tsv(path: str, g, pi: np.ndarray):
    order = np.lexsort((np.arange(g.n), -pi))
    with open(path, "w", encoding="utf-8") as fh:
        for u in order:
            fh.write(f"{g.labels[int(u)]}\t{pi[int(u)]:.17g}\n")


def _write_manifest(path: str, command: str, config: dict, inputs: list[str],
                    artifacts: list[str], seed, wall_time: float, metrics: dict):
    manifest = {
        "command": command,
        "config": config,
        "inputs": {p: _sha256(p) for p in inputs},
        "seed": seed,
        "artifacts": artifacts,
        "wall_time_s": wall_time,
        "metrics": metrics,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _verify_primitivity(factors):
    """Teleport-free mode needs a primitive operator; decide via the block
    indicator criteria and raise if the verdict is reducible."""
    if not factors:
        raise PrimitivityPreconditionError(
            "teleport-free mode without decompositions cannot be verified primitive")
    if len(factors) == 1:
        verdict = check_primitivity_single(indicator_matrix(factors[0]))
        if not verdict.primitive:
            raise PrimitivityPreconditionError(
                "indicator matrix is reducible; the teleport-free operator is "
                "not primitive")
        return
    cond = check_sufficient_conditions(factors)
    if cond.kind != "inconclusive":
        return
    stacked = check_primitivity_single(stacked_indicator(factors))
    if not stacked.primitive:
        raise PrimitivityPreconditionError(
            "stacked indicator matrix is reducible; the teleport-free operator "
            "is not primitive")


# ---------------------------------------------------------------------------
# rank

def cmd_rank(args) -> int:
    t0 = time.perf_counter()
    g = load_edge_list(args.graph)
    decomps = [load_decomposition(p, g) for p in args.blocks]
    if args.mu and not args.blocks:
        raise ValueError("--mu given without --blocks")
    mus = tuple(args.mu) if args.mu else tuple(0.1 for _ in decomps)
    if len(mus) != len(decomps):
        raise ValueError(f"{len(mus)} --mu values for {len(decomps)} --blocks files")

    teleport = _resolve_teleport(args.teleport, g, decomps)
    dangling = _resolve_dangling(args.dangling, g)
    cfg = RankingConfig(eta=args.eta, mus=mus, teleport=teleport,
                        dangling=dangling, tol=args.tol, max_iters=args.max_iters)
    factors = [factors_for(g, d) for d in decomps]
    if cfg.no_teleport_mode:
        _verify_primitivity(factors)

    workers = _workers(args)
    mode = args.mode
    if mode == "auto":
        part = detect_aggregates(g, decomps, cfg.dangling)
        mode = "separable" if not isinstance(part, NotSeparable) and part.L > 1 \
            else "power"
    if mode == "separable":
        result = solve_separable(g, decomps, cfg, workers=workers)
    else:
        result = ncdawarerank(g, factors, cfg, workers=workers)

    if args.verbose:
        for i, r in enumerate(result.residuals, start=1):
            print(f"iter {i}: residual {r:.3e}", file=sys.stderr)

    _write_rank_tsv(args.out, g, result.pi)
    artifacts = [args.out]
    fig_path = args.out + ".png"
    try:
        from .plotting import plot_residuals
        plot_residuals(result.residuals, fig_path,
                       bound=cfg.eta + sum(cfg.mus))
        artifacts.append(fig_path)
    except Exception as exc:  # figure failure should not sink the ranking
        print(f"warning: could not render residual figure: {exc}", file=sys.stderr)

    metrics = {
        "iterations": result.iterations,
        "final_residual": result.final_residual,
        "converged": result.converged,
        "mode": mode,
    }
    if result.aggregates is not None:
        metrics["aggregates"] = {
            "L": result.aggregates.L,
            "sizes": result.aggregates.sizes,
            "xi": [float(x) for x in result.aggregates.xi],
            "iterations": result.aggregates.iterations,
        }
    config = {
        "eta": cfg.eta, "mus": list(cfg.mus), "teleport": args.teleport,
        "dangling": args.dangling, "tol": cfg.tol, "max_iters": cfg.max_iters,
        "mode": args.mode, "workers": workers,
    }
    manifest_path = args.out + ".manifest.json"
    _write_manifest(manifest_path, "rank", config,
                    [args.graph] + list(args.blocks), artifacts + [manifest_path],
                    None, time.perf_counter() - t0, metrics)
    if not result.converged:
        print(f"did not converge within {cfg.max_iters} iterations "
              f"(residual {result.final_residual:.3e})", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# check

def cmd_check(args) -> int:
    g = load_edge_list(args.graph)
    decomps = [load_decomposition(p, g) for p in args.blocks]
    if not decomps:
        raise ValueError("check needs at least one --blocks file")
    factors = [factors_for(g, d) for d in decomps]

    singles = []
    for f in factors:
        verdict = check_primitivity_single(indicator_matrix(f))
        singles.append("primitive" if verdict.primitive else "reducible")
    report: dict = {"single": singles}

    final_primitive = any(s == "primitive" for s in singles)
    if len(factors) > 1:
        cond = check_sufficient_conditions(factors)
        report["sufficient_condition"] = {
            "condition_i": "i", "condition_ii": "ii", "inconclusive": "inconclusive",
        }[cond.kind]
        if cond.indices:
            report["sufficient_condition_indices"] = list(cond.indices)
        stacked = check_primitivity_single(stacked_indicator(factors))
        report["stacked"] = "primitive" if stacked.primitive else "reducible"
        final_primitive = stacked.primitive
    if args.separability:
        part = detect_aggregates(g, decomps, _resolve_dangling(args.dangling, g))
        if isinstance(part, NotSeparable):
            report["separability"] = {"separable": False, "reason": part.reason,
                                      "witness": list(part.witness)}
        else:
            report["separability"] = {"separable": True, "L": part.L,
                                      "sizes": [int(m.size) for m in part.members]}

    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK if final_primitive else EXIT_REDUCIBLE


# ---------------------------------------------------------------------------
# lab

def cmd_lab(args) -> int:
    P = ncdlab.read_dense_csv(args.matrix)
    n = P.shape[0]
    partition = None
    if args.partition:
        partition = ncdlab.parse_partition(args.partition, n)

    def emit(payload: dict):
        text = json.dumps(payload, indent=2, sort_keys=True)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        else:
            print(text)

    op = args.op
    if op == "stationary":
        pi = ncdlab.stationary_dense(P)
        emit({"pi": [float(x) for x in pi]})
    elif op == "coupling-eps":
        if partition is None:
            raise ValueError("coupling-eps needs --partition")
        emit({"epsilon": ncdlab.coupling_degree(P, partition)})
    elif op == "ncd-approx":
        if partition is None:
            raise ValueError("ncd-approx needs --partition")
        approx = ncdlab.ncd_approximate(P, partition, adjustment=args.adjustment)
        emit({"pi_tilde": [float(x) for x in approx.pi_tilde],
              "xi": [float(x) for x in approx.xi],
              "block_distributions": [[float(x) for x in d]
                                      for d in approx.block_distributions]})
    elif op.startswith("complement:"):
        if partition is None:
            raise ValueError("complement needs --partition")
        idx = int(op.split(":", 1)[1])
        S = ncdlab.stochastic_complement(P, partition, idx)
        if args.out:
            ncdlab.write_dense_csv(args.out, S)
        else:
            for row in S:
                print(",".join(f"{x:.17g}" for x in row))
    elif op == "exact-complement":
        if partition is None:
            raise ValueError("exact-complement needs --partition")
        res = ncdlab.exact_via_complementation(P, partition)
        emit({"pi": [float(x) for x in res.pi],
              "xi": [float(x) for x in res.xi],
              "coupling": [[float(x) for x in row] for row in res.coupling]})
    else:
        raise ValueError(f"unknown lab op {op!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment

def _method_solvers(names, eta, mu, tol, max_iters):
    """Map method names to (name, solver) pairs for the experiment harness."""
    out = []
    for name in names:
        if name == "pagerank":
            def run_pr(g, ds, _a=eta + mu):
                return pagerank(g, alpha=_a, tol=tol, max_iters=max_iters)
            out.append((name, run_pr))
        elif name == "ncd":
            def run_ncd(g, ds):
                cfg = RankingConfig(eta=eta, mus=tuple(mu / max(1, len(ds)) for _ in ds),
                                    dangling=NCDaware(), tol=tol, max_iters=max_iters)
                return ncdawarerank(g, ds, cfg)
            out.append((name, run_ncd))
        elif name == "ncd-strong":
            def run_ncds(g, ds):
                cfg = RankingConfig(eta=eta, mus=tuple(mu / max(1, len(ds)) for _ in ds),
                                    dangling=StronglyPreferential(), tol=tol,
                                    max_iters=max_iters)
                return ncdawarerank(g, ds, cfg)
            out.append((name, run_ncds))
        elif name == "totalrank":
            out.append((name, lambda g, ds: functional_rank(g, psi_total)))
        elif name == "linearrank":
            out.append((name, lambda g, ds: functional_rank(g, psi_linear(10))))
        elif name == "hyperrank":
            out.append((name, lambda g, ds: functional_rank(g, psi_hyper(3.0))))
        else:
            raise ValueError(f"unknown method {name!r}")
    return out


def cmd_experiment(args) -> int:
    t0 = time.perf_counter()
    g = load_edge_list(args.graph)
    decomps = [load_decomposition(p, g) for p in args.blocks]
    methods = _method_solvers(args.method or ["pagerank", "ncd"],
                              args.eta, args.mu_total, args.tol, args.max_iters)

    if args.kind == "spam":
        if args.target is None:
            raise ValueError("spam experiment needs --target")
        target = g.label_to_id.get(args.target)
        if target is None:
            raise ValueError(f"unknown target node {args.target!r}")
        counts = args.satellites or [10, 20, 50, 100]
        report = spam_experiment(g, decomps, methods, target, counts,
                                 seed=args.seed)
    elif args.kind == "sparsity":
        levels = args.keep or [0.9, 0.8, 0.7, 0.6, 0.5, 0.4]
        report = sparsity_experiment(g, decomps, methods, levels,
                                     reps=args.reps, seed=args.seed)
    elif args.kind == "newpages":
        report = newpages_experiment(g, decomps, methods, args.nodes,
                                     remove_fraction=args.remove_fraction,
                                     reps=args.reps, seed=args.seed)
    else:
        raise ValueError(f"unknown experiment kind {args.kind!r}")

    write_report_csv(args.out, report)
    artifacts = [args.out]
    fig_path = args.out + ".png"
    try:
        from .plotting import plot_report
        plot_report(report, fig_path)
        artifacts.append(fig_path)
    except Exception as exc:
        print(f"warning: could not render figure: {exc}", file=sys.stderr)

    manifest_path = args.out + ".manifest.json"
    _write_manifest(manifest_path, "experiment",
                    {"kind": args.kind, "methods": report.methods,
                     "eta": args.eta, "mu": args.mu_total,
                     "reps": args.reps},
                    [args.graph] + list(args.blocks), artifacts + [manifest_path],
                    args.seed, time.perf_counter() - t0,
                    {"rows": len(report.rows)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncdrank",
                                 description="decomposition-aware graph ranking toolkit")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    pr = sub.add_parser("rank", help="solve a ranking instance")
    pr.add_argument("--graph", required=True)
    pr.add_argument("--blocks", action="append", default=[])
    pr.add_argument("--eta", type=float, default=0.85)
    pr.add_argument("--mu", action="append", type=float)
    pr.add_argument("--teleport", default="uniform")
    pr.add_argument("--dangling", default="ncd")
    pr.add_argument("--tol", type=float, default=1e-8)
    pr.add_argument("--max-iters", type=int, default=1000)
    pr.add_argument("--mode", choices=["power", "separable", "auto"], default="power")
    pr.add_argument("--out", required=True)
    pr.add_argument("--workers", type=int)
    pr.add_argument("--verbose", action="store_true")
    pr.set_defaults(func=cmd_rank)

    pc = sub.add_parser("check", help="primitivity / separability verdicts")
    pc.add_argument("--graph", required=True)
    pc.add_argument("--blocks", action="append", default=[])
    pc.add_argument("--separability", action="store_true")
    pc.add_argument("--dangling", default="ncd")
    pc.add_argument("--out")
    pc.set_defaults(func=cmd_check)

    pl = sub.add_parser("lab", help="dense chain operations on CSV matrices")
    pl.add_argument("--matrix", required=True)
    pl.add_argument("--partition")
    pl.add_argument("--op", required=True)
    pl.add_argument("--adjustment", default="diagonal",
                    choices=["diagonal", "proportional", "rounded"])
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_lab)

    pe = sub.add_parser("experiment", help="perturbation studies")
    pe.add_argument("--kind", required=True, choices=["spam", "sparsity", "newpages"])
    pe.add_argument("--graph", required=True)
    pe.add_argument("--blocks", action="append", default=[])
    pe.add_argument("--method", action="append")
    pe.add_argument("--eta", type=float, default=0.85)
    pe.add_argument("--mu-total", type=float, default=0.1)
    pe.add_argument("--tol", type=float, default=1e-8)
    pe.add_argument("--max-iters", type=int, default=1000)
    pe.add_argument("--target")
    pe.add_argument("--satellites", type=int, nargs="*")
    pe.add_argument("--keep", type=float, nargs="*")
    pe.add_argument("--nodes", type=int, default=10)
    pe.add_argument("--remove-fraction", type=float, default=0.9)
    pe.add_argument("--reps", type=int, default=10)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PrimitivityPreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRIMITIVITY
    except (GraphParseError, DecompositionError, SeparabilityError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
