import itertools

import numpy as np
import pytest
import statsmodels.api as sm

from symdyn.dataio import TimeSeries
from symdyn.discovery import (CausalGraph, ContempEdge, LaggedEdge, ParentSets, PCMCIPlus, _orient, discover,
                              mci_prune, pc1_lagged, pcmci_plus, te_discovery, var_granger)
from symdyn.synthgen import Term, gen_scenario, gen_scm


def chain(T=500, seed=0):
    return gen_scm([Term("X2", (("X1", 1),), "linear", 0.8), Term("X3", (("X2", 1),), "linear", 0.8)], T,
                   seed=seed)[0]


# ---------------------------------------------------------------- PC1 / MCI

def test_pc1_null_false_candidate_rate():
    false, total = 0, 0
    for s in range(100):
        ts, _ = gen_scm([], 100, names=list("abcd"), seed=s)
        ps = pc1_lagged(ts, tau_max=1, alpha=0.01, test="parcorr", seed=s)
        false += sum(len(ps.nodes(t)) for t in range(4))
        total += 16
    assert false / total <= 0.02


def test_pc1_scenario1_contains_true_parent():
    ts, _ = gen_scenario("linear", 100, seed=0)
    assert (1, 1) in pc1_lagged(ts, test="parcorr").nodes(2)


def test_pc1_chain_removes_indirect_parent():
    ps = pc1_lagged(chain(), tau_max=2, test="parcorr")
    assert (0, 2) not in ps.nodes(2)
    assert (1, 1) in ps.nodes(2)


def test_parent_sets_sorted_by_strength():
    ts, _ = gen_scm([Term("y", (("a", 1),), "linear", 1.0), Term("y", (("b", 1),), "linear", 0.3)], 400, seed=3)
    ps = pc1_lagged(ts, test="parcorr")
    stats = [abs(s) for _, s in ps[ts.var_names.index("y")]]
    assert stats == sorted(stats, reverse=True)


def test_mci_common_driver_rejects_spurious():
    rejected = 0
    terms = [Term("Z", (("Z", 1),), "linear", 0.7), Term("X", (("Z", 1),), "linear", 0.8),
             Term("Y", (("Z", 1),), "linear", 0.8)]
    for s in range(100):
        ts, _ = gen_scm(terms, 500, seed=s)
        links = pcmci_plus(ts, test="parcorr", seed=s).lagged_links()
        rejected += not ({("X", "Y", 1), ("Y", "X", 1)} & links)
    assert rejected >= 90


def test_mci_empty_parents():
    ts, _ = gen_scenario("linear", 100, seed=1)
    assert mci_prune(ts, ParentSets({0: [], 1: [], 2: []})) == []


def test_interaction_cmiknn_any_parent_measured():
    hits = 0
    for s in range(20):
        ts, truth = gen_scenario("interaction", 100, seed=s)
        g = pcmci_plus(ts, test="cmiknn", seed=s)
        hits += any(g.has_link(*e) for e in truth.edges)
    assert hits >= 14


@pytest.mark.xfail(strict=True, reason="both interaction parents are retained in only ~43% of seeds at T=100")
def test_interaction_cmiknn_both_parents_retained():
    both = 0
    for s in range(20):
        ts, truth = gen_scenario("interaction", 100, seed=s)
        g = pcmci_plus(ts, test="cmiknn", seed=s)
        both += all(g.has_link(*e) for e in truth.edges)
    assert both >= 16


def test_quadratic_cmiknn_detects():
    hits = 0
    for s in range(20):
        ts, _ = gen_scenario("quadratic", 100, seed=s)
        hits += pcmci_plus(ts, test="cmiknn", seed=s).has_link("X2", "X3", 1)
    assert hits >= 16


# ---------------------------------------------------------------- contemporaneous

def test_contemporaneous_collider_oriented_into_z():
    ts, _ = gen_scm([Term("Z", (("X", 0),), "linear", 1.0), Term("Z", (("Y", 0),), "linear", 1.0)], 800, seed=2)
    g = pcmci_plus(ts, test="parcorr")
    assert set(g.directed_contemporaneous()) == {("X", "Z"), ("Y", "Z")}
    assert not g.lagged_edges


def test_lagged_arrow_propagates():
    terms = [Term("Y", (("X", 1),), "linear", 1.0), Term("Z", (("Y", 0),), "linear", 1.0)]
    ts, _ = gen_scm(terms, 800, seed=4)
    g = pcmci_plus(ts, test="parcorr")
    assert ("Y", "Z") in g.directed_contemporaneous()


def test_orient_unit_cases():
    # chain 0 - 1 - 2 with 1 in the separating set: stays undirected
    st = _orient(3, set(), {(0, 1), (1, 2)}, {((0, 0), 2): frozenset({1})})
    assert st == {(0, 1): "undirected", (1, 2): "undirected"}
    # collider 0 -> 1 <- 2
    st = _orient(3, set(), {(0, 1), (1, 2)}, {((0, 0), 2): frozenset()})
    assert st == {(0, 1): "a->b", (1, 2): "b->a"}
    # 0 - 1 - 2 - 3 with colliders at 1 and 2: edge 1-2 gets opposite proposals
    st = _orient(4, set(), {(0, 1), (1, 2), (2, 3)},
                 {((0, 0), 2): frozenset(), ((1, 0), 3): frozenset(), ((0, 0), 3): frozenset()})
    assert st[(1, 2)] == "conflicting"


def test_orientation_never_bidirected():
    for s in range(5):
        ts, _ = gen_scm([Term("b", (("a", 0),), "linear", 1.0), Term("c", (("b", 0),), "linear", 1.0),
                         Term("d", (("c", 0),), "linear", 0.5)], 300, seed=s)
        g = pcmci_plus(ts, test="parcorr", seed=s)
        d = g.directed_contemporaneous()
        assert not any((b, a) in d for a, b in d)


# ---------------------------------------------------------------- baselines

def test_var_scenario1():
    ts, _ = gen_scenario("linear", 100, seed=0)
    assert var_granger(ts).has_link("X2", "X3", 1)


def test_var_interaction_majority_miss():
    misses = 0
    for s in range(50):
        ts, truth = gen_scenario("interaction", 100, seed=s)
        misses += not any(var_granger(ts).has_link(*e) for e in truth.edges)
    assert misses > 25


def test_var_ar1_coefficient():
    ts, _ = gen_scm([Term("x", (("x", 1),), "linear", 0.7)], 500, seed=0)
    g = var_granger(ts)
    (e,) = g.lagged_edges
    assert e.source == e.target == "x" and abs(e.statistic - 0.7) < 0.1


def test_var_matches_statsmodels():
    ts, _ = gen_scenario("linear", 200, seed=5)
    g = var_granger(ts, alpha=1.0)
    X = ts.values
    fit = sm.OLS(X[1:, 2], sm.add_constant(X[:-1])).fit()
    for j, name in enumerate(ts.var_names):
        e = next(e for e in g.lagged_edges if e.source == name and e.target == "X3")
        assert e.statistic == pytest.approx(fit.params[j + 1], rel=1e-9)
        assert e.p_value == pytest.approx(fit.pvalues[j + 1], rel=1e-6)


def test_var_singular():
    x = np.random.default_rng(0).standard_normal(50)
    with pytest.raises(np.linalg.LinAlgError):
        var_granger(TimeSeries(np.column_stack([x, x]), ["a", "b"]))


def test_te_discovery_scenario1():
    ts, _ = gen_scenario("linear", 100, seed=0)
    assert te_discovery(ts, seed=0).has_link("X2", "X3", 1)


# ---------------------------------------------------------------- graph object and properties

def test_determinism_and_subset_of_pc1():
    ts, _ = gen_scenario("quadratic", 100, seed=3)
    g1 = pcmci_plus(ts, test="cmiknn", seed=9)
    g2 = pcmci_plus(ts, test="cmiknn", seed=9)
    assert g1 == g2
    cands = {(ts.var_names[s], ts.var_names[t], lag) for t in g1.parents_ for (s, lag) in g1.parents_.nodes(t)}
    assert g1.lagged_links() <= cands


def test_constant_column_rejected():
    vals = np.column_stack([np.ones(50), np.random.default_rng(0).standard_normal(50)])
    with pytest.raises(ValueError, match="constant"):
        pcmci_plus(TimeSeries(vals, ["a", "b"]), test="parcorr")


def test_graph_json_roundtrip(tmp_path):
    g = CausalGraph(["a", "b", "c"], 1, [LaggedEdge("a", "b", 1, 0.5, 0.001)],
                    [ContempEdge("c", "a", "a->b", 0.3, 0.002)], {"seed": 1})
    # stored canonically: a before c, orientation flipped
    assert g.contemporaneous_edges[0].orientation == "b->a"
    g.save(tmp_path / "g.json")
    assert CausalGraph.load(tmp_path / "g.json") == g
    with pytest.raises(ValueError):
        CausalGraph(["a"], 1, [LaggedEdge("a", "a", 2)])
    with pytest.raises(ValueError):
        ContempEdge("a", "a")


def test_pcmci_parcorr_agrees_with_var_on_linear_family():
    agree = total = 0
    for s in range(10):
        r = np.random.default_rng(s)
        names = ["a", "b", "c", "d"]
        terms = [Term(v, ((v, 1),), "linear", 0.4) for v in names]
        for src, dst in itertools.permutations(names, 2):
            if r.random() < 0.25:
                terms.append(Term(dst, ((src, 1),), "linear", float(r.choice([-0.5, 0.5]))))
        ts, _ = gen_scm(terms, 500, seed=s, names=names)
        a = pcmci_plus(ts, test="parcorr", seed=s).lagged_links()
        b = var_granger(ts).lagged_links()
        for link in itertools.product(names, names, [1]):
            total += 1
            agree += (link in a) == (link in b)
    assert agree / total >= 0.9


def test_estimator_wrapper_and_dispatch():
    ts, _ = gen_scenario("linear", 100, seed=0)
    est = PCMCIPlus(test="parcorr").fit(ts.values)
    assert est.graph_.has_link("X2", "X3", 1)
    assert est.get_params()["tau_max"] == 1
    assert discover(ts, "var").has_link("X2", "X3", 1)
    with pytest.raises(ValueError):
        discover(ts, "lingam")
