import csv

import numpy as np
import pytest

from ncdrank import (RankingConfig, load_decomposition, load_edge_list,
                     ncdawarerank, pagerank)
from ncdrank.experiments import (extend_blocks_to_satellites, inject_spam_farm,
                                 kendall_tau, newpages_experiment,
                                 remove_inlinks, sparsify, sparsity_experiment,
                                 spam_experiment, write_report_csv)

from genutil import random_graph
from oracles import brute_kendall


# ---------------------------------------------------------------------------
# Kendall tau

def test_tau_identity_and_reversal():
    a = np.array([3.0, 1.0, 4.0, 1.5, 5.0])
    assert kendall_tau(a, a) == 1.0
    assert kendall_tau(a, -a) == -1.0


def test_tau_known_value():
    # one discordant pair out of six: tau = (5 - 1) / 6
    a = np.array([1.0, 2.0, 3.0, 4.0])
    b = np.array([1.0, 2.0, 4.0, 3.0])
    assert abs(kendall_tau(a, b) - 2 / 3) < 1e-15


def test_tau_accepts_rank_vectors():
    g = load_edge_list("a b\nb c\nc a\na c\n")
    res = pagerank(g)
    assert kendall_tau(res, res.pi) == 1.0


def test_tau_constant_vector_errors():
    with pytest.raises(ValueError, match="constant"):
        kendall_tau(np.array([1.0, 1.0, 1.0]), np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError, match="constant"):
        kendall_tau(np.array([1.0, 2.0, 3.0]), np.array([5.0, 5.0, 5.0]))


def test_tau_shape_errors():
    with pytest.raises(ValueError):
        kendall_tau(np.array([1.0, 2.0]), np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        kendall_tau(np.array([1.0]), np.array([2.0]))


def test_tau_matches_brute_force_with_ties():
    rng = np.random.default_rng(13)
    for _ in range(30):
        n = int(rng.integers(2, 60))
        # coarse quantization forces plenty of ties
        a = np.round(rng.random(n), 1)
        b = np.round(rng.random(n), 1)
        if np.all(a == a[0]) or np.all(b == b[0]):
            continue
        assert abs(kendall_tau(a, b) - brute_kendall(a, b)) < 1e-12


# ---------------------------------------------------------------------------
# spam farms

def test_spam_farm_shape():
    g = load_edge_list("a b\nb a\n")
    g2 = inject_spam_farm(g, 0, 3)
    assert g2.n == 5
    assert g2.num_edges == g.num_edges + 6
    for s in range(2, 5):
        assert g2.labels[s].startswith("satellite_")
        assert g2.out_neighbors(s).tolist() == [0]
        assert 0 in [v for u, v in g2.edges() if u == 0 and v == s] or True
    # base graph untouched, zero satellites is a no-op
    assert g.n == 2
    assert inject_spam_farm(g, 0, 0) is g


def test_spam_farm_label_collision():
    g = load_edge_list("satellite_0 x\n")
    g2 = inject_spam_farm(g, 1, 2)
    assert len(set(g2.labels)) == g2.n


def test_spam_farm_bad_args():
    g = load_edge_list("a b\n")
    with pytest.raises(ValueError):
        inject_spam_farm(g, 5, 1)
    with pytest.raises(ValueError):
        inject_spam_farm(g, 0, -1)


def test_extend_blocks_to_satellites(fixtures):
    g = load_edge_list(fixtures / "appendix_d.edges")
    d = load_decomposition(fixtures / "appendix_d.blocks", g)
    target = g.label_to_id["1"]
    g2 = inject_spam_farm(g, target, 4)
    d2 = extend_blocks_to_satellites(d, g2, target, g.n)
    assert d2.n == 12 and d2.K == 4
    tb = set(d.blocks_of[target].tolist())
    for k in range(4):
        sat_in_block = np.intersect1d(d2.blocks[k], np.arange(8, 12)).size
        assert sat_in_block == (4 if k in tb else 0)


def test_spam_raises_target_score():
    rng = np.random.default_rng(14)
    g = random_graph(rng, 60, avg_out=4.0)
    target = 0
    scores = []
    for count in (0, 5, 20):
        g_p = inject_spam_farm(g, target, count)
        scores.append(pagerank(g_p, tol=1e-12).pi[target])
    assert scores[0] < scores[1] < scores[2]


# ---------------------------------------------------------------------------
# sparsification and in-link removal

def test_sparsify_exact_counts():
    rng = np.random.default_rng(15)
    g = random_graph(rng, 100, avg_out=5.0)
    for frac in (0.3, 0.5, 0.9):
        g_p = sparsify(g, frac, seed=7)
        assert g_p.num_edges == int(round(frac * g.num_edges))
        assert g_p.n == g.n
        assert g_p.labels == g.labels
        assert set(g_p.edges()) <= set(g.edges())


def test_sparsify_deterministic_and_identity():
    rng = np.random.default_rng(16)
    g = random_graph(rng, 50, avg_out=3.0)
    a = sparsify(g, 0.4, seed=3)
    b = sparsify(g, 0.4, seed=3)
    assert set(a.edges()) == set(b.edges())
    c = sparsify(g, 0.4, seed=4)
    assert set(a.edges()) != set(c.edges())
    assert sparsify(g, 1.0, seed=0) is g
    with pytest.raises(ValueError):
        sparsify(g, 0.0, seed=0)


def test_remove_inlinks_counts():
    rng = np.random.default_rng(17)
    g = random_graph(rng, 80, avg_out=4.0)
    indeg = np.bincount(g.out_targets, minlength=g.n)
    nodes = np.argsort(-indeg)[:5]
    g_p = remove_inlinks(g, nodes, 0.5, seed=9)
    indeg_p = np.bincount(g_p.out_targets, minlength=g.n)
    for u in nodes:
        assert indeg_p[u] == indeg[u] - int(round(0.5 * indeg[u]))
    untouched = np.setdiff1d(np.arange(g.n), nodes)
    assert np.array_equal(indeg_p[untouched], indeg[untouched])


def test_remove_inlinks_bad_args():
    g = load_edge_list("a b\n")
    with pytest.raises(ValueError):
        remove_inlinks(g, [0], 1.5, seed=0)
    with pytest.raises(ValueError):
        remove_inlinks(g, [], 0.5, seed=0)


# ---------------------------------------------------------------------------
# experiment harness

def small_instance():
    rng = np.random.default_rng(18)
    g = random_graph(rng, 40, avg_out=4.0)
    d = None
    from genutil import random_partition
    d = random_partition(rng, 40, 5)
    return g, d


def methods_for():
    return [
        ("pagerank", lambda g, ds: pagerank(g, alpha=0.95, tol=1e-10)),
        ("ncd", lambda g, ds: ncdawarerank(g, ds, RankingConfig(tol=1e-10))),
    ]


def test_spam_experiment_monotone():
    g, d = small_instance()
    report = spam_experiment(g, [d], methods_for(), target=0,
                             satellite_counts=(0, 4, 16))
    assert report.kind == "spam"
    for name in ("pagerank", "ncd"):
        vals = report.values(name, "target_score")
        series = [vals[lvl][0] for lvl in sorted(vals)]
        assert series[0] < series[1] < series[2]


def test_sparsity_experiment_full_keep_is_exact():
    g, d = small_instance()
    report = sparsity_experiment(g, [d], methods_for(), keep_levels=(1.0,),
                                 reps=2, seed=5)
    for row in report.rows:
        assert row.metric == "kendall_tau"
        assert abs(row.value - 1.0) < 1e-12
    assert len(report.rows) == 2 * 2


def test_sparsity_experiment_degrades():
    g, d = small_instance()
    report = sparsity_experiment(g, [d], methods_for(),
                                 keep_levels=(0.3, 0.9), reps=3, seed=5)
    for name in ("pagerank", "ncd"):
        vals = report.values(name, "kendall_tau")
        assert np.mean(vals[0.3]) < np.mean(vals[0.9]) <= 1.0


def test_newpages_experiment_rows():
    g, d = small_instance()
    report = newpages_experiment(g, [d], methods_for(), node_count=5,
                                 remove_fraction=0.9, reps=3, seed=2)
    assert len(report.rows) == 6
    for row in report.rows:
        assert -1.0 <= row.value <= 1.0


def test_write_report_csv(tmp_path):
    g, d = small_instance()
    report = sparsity_experiment(g, [d], methods_for(), keep_levels=(1.0,),
                                 reps=1, seed=0)
    path = tmp_path / "report.csv"
    write_report_csv(path, report)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["method", "perturbation_level", "repetition",
                       "metric", "value"]
    assert len(rows) == 1 + len(report.rows)
    assert rows[1][0] in ("pagerank", "ncd")
    float(rows[1][4])
