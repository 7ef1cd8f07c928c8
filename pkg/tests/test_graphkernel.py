import itertools

import numpy as np
import pytest

from oracles import brute_degree_kernel, brute_wl_kernel, graph_corpus
from symdyn.discovery import CausalGraph, ContempEdge, LaggedEdge, pcmci_plus
from symdyn.graphkernel import SimpleGraph, degree_histogram, degree_kernel, kernel_matrix, wl_kernel
from symdyn.synthgen import Term, gen_scm

path3 = SimpleGraph("abc", [("a", "b"), ("b", "c")])
triangle = SimpleGraph("abc", [("a", "b"), ("b", "c"), ("a", "c")])
path4 = SimpleGraph("abcd", [("a", "b"), ("b", "c"), ("c", "d")])
star4 = SimpleGraph("abcd", [("a", "b"), ("a", "c"), ("a", "d")])


def test_degree_kernel_hand_value():
    assert degree_histogram(path3).tolist() == [0, 2, 1]
    assert degree_kernel(path3, triangle) == 3


def test_degree_self_similarity_and_relabel():
    h = degree_histogram(path4)
    assert degree_kernel(path4, path4) == float(h @ h)
    relabeled = SimpleGraph("abcd", [("d", "c"), ("c", "a"), ("a", "b")])
    assert degree_kernel(path4, star4) == degree_kernel(relabeled, star4)


def test_wl_uniform_h0():
    assert wl_kernel(path4, star4, h=0, init_labels="uniform") == 16


def test_wl_path_vs_star_hand_refinement():
    # uniform init, h=1: iteration 0 all share one colour (4*4=16);
    # iteration 1 path colours {deg1:2, deg2:2}, star {deg3:1, deg1:3}; shared deg1 -> 2*3
    assert wl_kernel(path4, star4, h=1, init_labels="uniform") == 16 + 6
    assert wl_kernel(path4, path4, h=1, init_labels="uniform") == 16 + 8
    assert wl_kernel(path4, path4, 1, "uniform") != wl_kernel(path4, star4, 1, "uniform")


def test_wl_isomorphism_invariance():
    iso = SimpleGraph("abcd", [("c", "a"), ("a", "d"), ("d", "b")])
    for h in range(4):
        k = wl_kernel(path4, path4, h, "uniform")
        assert k == wl_kernel(iso, iso, h, "uniform") == wl_kernel(path4, iso, h, "uniform")


def test_kernels_match_brute_force_on_corpus():
    corpus = graph_corpus()
    by_nodes = {}
    for g in corpus:
        by_nodes.setdefault(tuple(g.var_names), []).append(g)
    for group in by_nodes.values():
        for g1, g2 in itertools.combinations_with_replacement(group, 2):
            assert degree_kernel(g1, g2) == brute_degree_kernel(g1, g2)
            for init in ("identity", "uniform"):
                assert wl_kernel(g1, g2, 3, init) == brute_wl_kernel(g1, g2, 3, init)


def test_shared_table_matrix_equals_pairwise():
    group = [g for g in graph_corpus(60, seed=3) if g.var_names == [f"v{i}" for i in range(5)]]
    km = kernel_matrix(group, "wl", h=2)
    for i, j in itertools.combinations(range(len(group)), 2):
        assert km.values[i, j] == wl_kernel(group[i], group[j], 2)


def test_matrix_psd_cauchy_schwarz_and_normalization():
    groups = {}
    for g in graph_corpus():
        groups.setdefault(tuple(g.var_names), []).append(g)
    for group in groups.values():
        for kind in ("wl", "degree"):
            km = kernel_matrix(group, kind)
            K = km.values
            assert np.allclose(K, K.T, atol=1e-10)
            assert km.min_eigenvalue() >= -1e-8 * np.trace(K)
            assert np.all(K ** 2 <= np.outer(np.diag(K), np.diag(K)) + 1e-9)
            norm = km.normalized().values
            assert np.all(np.diag(norm) == 1.0)


def test_random_scm_graphs_psd():
    graphs = []
    for s in range(5):
        r = np.random.default_rng(s)
        terms = [Term(b, ((a, 0),), "linear", 0.5) for a, b in itertools.combinations("abcd", 2) if r.random() < 0.5]
        terms += [Term(b, ((a, 1),), "linear", 0.3) for a, b in itertools.permutations("abcd", 2) if r.random() < 0.3]
        ts, _ = gen_scm(terms, 200, seed=s, names=list("abcd"))
        graphs.append(pcmci_plus(ts, test="parcorr", seed=s))
    km = kernel_matrix(graphs, "wl")
    assert km.is_psd()


def test_one_graph_and_mismatch():
    assert kernel_matrix([path3]).values.shape == (1, 1)
    with pytest.raises(ValueError, match="mismatched"):
        kernel_matrix([path3, path4])


def test_wl_normalized_stable_after_partition_stabilizes():
    k_hat = []
    for h in (3, 4, 5):
        km = kernel_matrix([path4, star4], "wl", h=h, init_labels="uniform").normalized()
        k_hat.append(km.values[0, 1])
    # once colours are stable each extra round adds a block proportional to iteration 0 counts
    assert k_hat[0] > 0 and abs(k_hat[2] - k_hat[1]) < abs(k_hat[1] - k_hat[0]) + 1e-12


def test_flatten_causal_graph_drops_direction_and_loops():
    g = CausalGraph(list("abc"), 1, [LaggedEdge("a", "b", 1), LaggedEdge("b", "a", 1), LaggedEdge("c", "c", 1)],
                    [ContempEdge("b", "c", "conflicting")])
    assert degree_histogram(g).tolist() == [0, 2, 1]


def test_kernel_csv(tmp_path):
    km = kernel_matrix([path4, star4], "degree", labels=["p", "s"])
    km.to_csv(tmp_path / "k.csv")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == ",p,s" and lines[1].startswith("p,")
