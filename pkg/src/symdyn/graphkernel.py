"""Degree-histogram and Weisfeiler-Lehman graph kernels.

Both kernels operate on an undirected simple view of a graph: the union of
lagged and contemporaneous edges with directions and self-loops dropped.
"""

import csv
from collections import Counter

import numpy as np

from .discovery import CausalGraph
from .graphnet import FusionNetwork, edge_sets


class SimpleGraph:
    """Undirected simple graph on a fixed, ordered node list."""

    def __init__(self, nodes, edges=()):
        self.nodes = list(nodes)
        known = set(self.nodes)
        adj = {v: set() for v in self.nodes}
        for a, b in edges:
            if a not in known or b not in known:
                raise ValueError("edge refers to an unknown node")
            if a != b:
                adj[a].add(b)
                adj[b].add(a)
        self.adj = adj

    def degrees(self):
        return [len(self.adj[v]) for v in self.nodes]

    def edges(self):
        return {frozenset((a, b)) for a in self.nodes for b in self.adj[a]}


def flatten(g, min_count=1):
    """Undirected simple view of a CausalGraph, FusionNetwork or SimpleGraph."""
    if isinstance(g, SimpleGraph):
        return g
    if isinstance(g, (CausalGraph, FusionNetwork)):
        directed, und, _ = edge_sets(g, "mixed", min_count)
        pairs = [tuple(p) for p in directed] + [tuple(sorted(p)) for p in und]
        return SimpleGraph(g.var_names, pairs)
    raise TypeError(f"cannot build a graph from {type(g).__name__}")


def degree_histogram(g):
    g = flatten(g)
    degs = g.degrees()
    return np.bincount(degs, minlength=1) if degs else np.zeros(1, dtype=int)


def degree_kernel(g1, g2):
    """Dot product of the two degree histograms (bins 0..max degree)."""
    h1, h2 = degree_histogram(g1), degree_histogram(g2)
    m = max(len(h1), len(h2))
    h1 = np.pad(h1, (0, m - len(h1)))
    h2 = np.pad(h2, (0, m - len(h2)))
    return float(h1 @ h2)


def wl_features(graphs, h=3, init_labels="identity"):
    """Per-graph WL colour counts over iterations 0..h with one shared colour table.

    Colour ``c`` at iteration ``i+1`` is the table index of the signature
    ``(colour_i, sorted neighbour colours_i)``; the table is injective, so
    equal colours mean equal refinement histories. ``init_labels`` is
    ``"identity"`` (node name), ``"uniform"`` or a dict node -> label.
    """
    if h < 0:
        raise ValueError("h must be non-negative")
    graphs = [flatten(g) for g in graphs]
    table = {}
    features = [Counter() for _ in graphs]
    colours = []
    for g in graphs:
        if init_labels == "identity":
            init = {v: ("init", str(v)) for v in g.nodes}
        elif init_labels == "uniform":
            init = {v: ("init", "") for v in g.nodes}
        else:
            init = {v: ("init", str(init_labels[v])) for v in g.nodes}
        colours.append({v: table.setdefault((0, init[v]), len(table)) for v in g.nodes})
    for k, col in enumerate(colours):
        features[k].update(col.values())
    for it in range(1, h + 1):
        new_colours = []
        for g, col in zip(graphs, colours):
            new = {}
            for v in g.nodes:
                sig = (it, col[v], tuple(sorted(col[u] for u in g.adj[v])))
                new[v] = table.setdefault(sig, len(table))
            new_colours.append(new)
        colours = new_colours
        for k, col in enumerate(colours):
            features[k].update(col.values())
    return features


def _dot(c1, c2):
    if len(c2) < len(c1):
        c1, c2 = c2, c1
    return float(sum(v * c2.get(key, 0) for key, v in c1.items()))


def wl_kernel(g1, g2, h=3, init_labels="identity"):
    """Weisfeiler-Lehman subtree kernel: dot product of colour histograms, iterations 0..h."""
    f1, f2 = wl_features([g1, g2], h, init_labels)
    return _dot(f1, f2)


class KernelMatrix:
    def __init__(self, labels, values):
        self.labels = list(labels)
        self.values = np.asarray(values, dtype=float)

    def normalized(self):
        d = np.sqrt(np.diag(self.values))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.values / np.outer(d, d)
        out[~np.isfinite(out)] = 0.0
        np.fill_diagonal(out, np.where(d > 0, 1.0, 0.0))
        return KernelMatrix(self.labels, out)

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.values).min())

    def is_psd(self, rtol=1e-8):
        return self.min_eigenvalue() >= -rtol * max(np.trace(self.values), 1.0)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([""] + self.labels)
            for label, row in zip(self.labels, self.values):
                writer.writerow([label] + [repr(float(v)) for v in row])


def kernel_matrix(graphs, kind="wl", labels=None, normalize=False, h=3, init_labels="identity"):
    """Symmetric matrix of pairwise kernel values over graphs with identical node sets."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph")
    flat = [flatten(g) for g in graphs]
    nodes = set(flat[0].nodes)
    if any(set(g.nodes) != nodes for g in flat[1:]):
        raise ValueError("graphs have mismatched node sets")
    labels = list(labels) if labels is not None else [str(i) for i in range(len(graphs))]
    n = len(flat)
    K = np.zeros((n, n))
    if kind == "degree":
        for i in range(n):
            for j in range(i, n):
                K[i, j] = K[j, i] = degree_kernel(flat[i], flat[j])
    elif kind == "wl":
        # a shared table gives the same values as per-pair tables (colours are canonical)
        feats = wl_features(flat, h, init_labels)
        for i in range(n):
            for j in range(i, n):
                K[i, j] = K[j, i] = _dot(feats[i], feats[j])
    else:
        raise ValueError(f"unknown kernel {kind!r}")
    km = KernelMatrix(labels, K)
    return km.normalized() if normalize else km
