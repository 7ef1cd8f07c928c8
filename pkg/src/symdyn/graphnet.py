"""Fusion networks and node centralities.

A fusion network counts how many graphs of a group contain each edge.
Lagged edges are counted per lag; contemporaneous edges are counted per
orientation class (directed ``a -> b``, undirected, conflicting).
"""

import csv
import json
from dataclasses import dataclass
from fractions import Fraction

import networkx as nx
import numpy as np

from .discovery import CausalGraph


class FusionNetwork:
    def __init__(self, var_names, lagged_counts, contemporaneous_counts, group_size, group=None, meta=None):
        self.var_names = list(var_names)
        n = len(self.var_names)
        self.lagged_counts = np.asarray(lagged_counts, dtype=int)
        if self.lagged_counts.ndim != 3 or self.lagged_counts.shape[:2] != (n, n):
            raise ValueError("lagged_counts must be N x N x tau_max")
        self.contemporaneous_counts = {
            key: np.asarray(contemporaneous_counts[key], dtype=int)
            for key in ("directed", "undirected", "conflicting")
        }
        self.group_size = int(group_size)
        self.group = group
        self.meta = dict(meta or {})
        for arr in [self.lagged_counts, *self.contemporaneous_counts.values()]:
            if arr.size and (arr.min() < 0 or arr.max() > self.group_size):
                raise ValueError("counts must lie in [0, group_size]")

    @property
    def n_vars(self):
        return len(self.var_names)

    @property
    def tau_max(self):
        return self.lagged_counts.shape[2]

    def support(self, min_count=1):
        """Binary edge view: (lagged directed pairs, contemporaneous directed pairs, undirected pairs).

        Lagged edges are merged over lags. Directed contemporaneous edges
        are pairs (a, b); undirected and conflicting edges are frozensets.
        """
        names = self.var_names
        lagged = {(names[i], names[j]) for i, j in zip(*np.nonzero(
            self.lagged_counts.sum(axis=2) >= min_count))}
        cd = self.contemporaneous_counts["directed"]
        directed = {(names[i], names[j]) for i, j in zip(*np.nonzero(cd >= min_count))}
        und = self.contemporaneous_counts["undirected"] + self.contemporaneous_counts["conflicting"]
        undirected = {frozenset((names[i], names[j])) for i, j in zip(*np.nonzero(und >= min_count)) if i < j}
        return lagged, directed, undirected

    def to_json(self):
        return {
            "kind": "fusion",
            "group": self.group,
            "group_size": self.group_size,
            "vars": self.var_names,
            "tau_max": self.tau_max,
            "lagged_counts": self.lagged_counts.tolist(),
            "contemporaneous_counts": {k: v.tolist() for k, v in self.contemporaneous_counts.items()},
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(obj["vars"], obj["lagged_counts"], obj["contemporaneous_counts"],
                   obj["group_size"], obj.get("group"), obj.get("meta"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def binarize(graph, tau_max=None):
    """Indicator arrays of one CausalGraph in fusion layout."""
    names = graph.var_names
    idx = {v: i for i, v in enumerate(names)}
    n = len(names)
    tau_max = tau_max or graph.tau_max
    lagged = np.zeros((n, n, tau_max), dtype=int)
    for e in graph.lagged_edges:
        lagged[idx[e.source], idx[e.target], e.lag - 1] = 1
    contemp = {k: np.zeros((n, n), dtype=int) for k in ("directed", "undirected", "conflicting")}
    for e in graph.contemporaneous_edges:
        a, b = idx[e.a], idx[e.b]
        if e.orientation == "a->b":
            contemp["directed"][a, b] = 1
        elif e.orientation == "b->a":
            contemp["directed"][b, a] = 1
        else:
            contemp[e.orientation][a, b] = contemp[e.orientation][b, a] = 1
    return lagged, contemp


def fuse(graphs, group=None):
    """Element-wise sum of binarised causal graphs sharing one variable set."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph")
    names = graphs[0].var_names
    for g in graphs[1:]:
        if g.var_names != names:
            raise ValueError("graphs have mismatched variable sets")
    tau_max = max(g.tau_max for g in graphs)
    n = len(names)
    lagged = np.zeros((n, n, tau_max), dtype=int)
    contemp = {k: np.zeros((n, n), dtype=int) for k in ("directed", "undirected", "conflicting")}
    for g in graphs:
        lag_i, con_i = binarize(g, tau_max)
        lagged += lag_i
        for k in contemp:
            contemp[k] += con_i[k]
    return FusionNetwork(names, lagged, contemp, len(graphs), group)


# ---------------------------------------------------------------------------
# centralities


@dataclass
class CentralityReport:
    nodes: list
    in_degree: np.ndarray
    out_degree: np.ndarray
    degree: np.ndarray
    closeness: np.ndarray
    betweenness: np.ndarray
    self_loops: np.ndarray
    closeness_variant: str

    def rows(self):
        for k, node in enumerate(self.nodes):
            yield {"node": node, "in_degree": int(self.in_degree[k]), "out_degree": int(self.out_degree[k]),
                   "degree": int(self.degree[k]), "closeness": float(self.closeness[k]),
                   "betweenness": float(self.betweenness[k]), "self_loops": int(self.self_loops[k])}

    def to_csv(self, path):
        fields = ["node", "in_degree", "out_degree", "degree", "closeness", "betweenness", "self_loops"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def edge_sets(g, mode="mixed", min_count=1):
    """Directed pairs, undirected pairs and self-loop counts of a graph.

    ``mode="directed-lagged"`` keeps lagged edges only; ``"mixed"`` adds
    contemporaneous edges, with undirected and conflicting ones undirected.
    Lagged edges at different lags between the same pair collapse into one.
    """
    if mode not in ("directed-lagged", "mixed"):
        raise ValueError("mode must be 'directed-lagged' or 'mixed'")
    if isinstance(g, FusionNetwork):
        lagged, cdir, und = g.support(min_count)
    else:
        lagged = {(e.source, e.target) for e in g.lagged_edges}
        cdir = set(g.directed_contemporaneous())
        und = {frozenset((e.a, e.b)) for e in g.contemporaneous_edges
               if e.orientation in ("undirected", "conflicting")}
    loops = {v: 0 for v in g.var_names}
    for a, b in lagged:
        if a == b:
            loops[a] += 1
    directed = {(a, b) for a, b in lagged if a != b}
    if mode == "mixed":
        directed |= cdir
    else:
        und = set()
    return directed, und, loops


def centralities(g, mode="mixed", min_count=1):
    """Degree, closeness and betweenness centralities over unweighted edges.

    Self-loops are excluded from every measure and reported separately.
    Undirected edges count toward ``degree`` but not in/out degree and are
    traversable in both directions for path-based measures. Closeness uses
    outgoing distances, ``(n - 1) / sum(d)`` when every node reaches every
    other node, otherwise the harmonic form ``sum(1 / d) / (n - 1)``.
    Betweenness is the unnormalised sum over ordered pairs.
    """
    nodes = list(g.var_names)
    if not nodes:
        raise ValueError("empty graph")
    directed, und, loops = edge_sets(g, mode, min_count)
    n = len(nodes)
    idx = {v: i for i, v in enumerate(nodes)}
    in_deg = np.zeros(n, dtype=int)
    out_deg = np.zeros(n, dtype=int)
    und_deg = np.zeros(n, dtype=int)
    for a, b in directed:
        out_deg[idx[a]] += 1
        in_deg[idx[b]] += 1
    for pair in und:
        for v in pair:
            und_deg[idx[v]] += 1
    G = nx.DiGraph()
    G.add_nodes_from(nodes)
    G.add_edges_from(directed)
    for pair in und:
        a, b = sorted(pair)
        G.add_edge(a, b)
        G.add_edge(b, a)
    dist = dict(nx.all_pairs_shortest_path_length(G))
    connected = all(len(dist[v]) == n for v in nodes)
    closeness = np.zeros(n)
    if n > 1:
        for v in nodes:
            others = [d for u, d in dist[v].items() if u != v]
            if connected:
                closeness[idx[v]] = (n - 1) / sum(others)
            else:
                # exact rational sum, rounded once
                closeness[idx[v]] = float(sum((Fraction(1, d) for d in others), Fraction(0)) / (n - 1))
    bc = nx.betweenness_centrality(G, normalized=False)
    betweenness = np.array([bc[v] for v in nodes], dtype=float)
    return CentralityReport(nodes, in_deg, out_deg, in_deg + out_deg + und_deg, closeness, betweenness,
                            np.array([loops[v] for v in nodes], dtype=int),
                            "standard" if connected else "harmonic")
