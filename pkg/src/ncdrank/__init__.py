"""Decomposition-aware ranking of sparse directed graphs.

The package splits into a sparse model layer (graph, decomposition,
ranking, separable), a dense desk-scale laboratory for nearly-completely-
decomposable chains (ncdlab), perturbation experiments (experiments), and a
command-line front end (cli).
"""

from .graph import (ComponentLabeling, GraphParseError, SparseGraph,
                    load_edge_list, strongly_connected_components,
                    weakly_connected_components)
from .decomposition import (Decomposition, DecompositionError, IndicatorMatrix,
                            ProximalStructure, ProximityFactors,
                            build_factors, check_primitivity_single,
                            check_sufficient_conditions, factors_for,
                            indicator_matrix, inter_level_row,
                            load_decomposition, partition_by_host,
                            proximal_sets, stacked_indicator)
from .ranking import (BlockBalanced, Custom, NCDaware, RankingConfig,
                      RankVector, StronglyPreferential, TeleportSpec,
                      UniformNodes, WeaklyPreferential, apply_step,
                      convergence_ratio, functional_rank, ncdawarerank,
                      pagerank, psi_geometric, psi_hyper, psi_linear,
                      psi_total, teleport_vector)
from .separable import (AggregatePartition, ConfinementError, NotSeparable,
                        SeparabilityError, coupling_bound, detect_aggregates,
                        pagerank_confined, solve_separable, verify_lumpability)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
