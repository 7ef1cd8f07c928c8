"""PCMCI+ causal discovery and the VAR-Granger and transfer-entropy baselines.

All routines return a :class:`CausalGraph`. Variables are referred to by
index internally and by name in the graph. A lagged node is written
``(var, lag)`` with ``lag >= 1`` meaning ``X_var(t - lag)``.
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import stats
from sklearn.base import BaseEstimator

from . import __version__
from ._utils import derive_seed
from .citest import get_test, transfer_entropy
from .dataio import TimeSeries

ORIENTATIONS = ("a->b", "b->a", "undirected", "conflicting")


@dataclass(frozen=True, order=True)
class LaggedEdge:
    source: str
    target: str
    lag: int
    statistic: float = field(compare=False, default=float("nan"))
    p_value: float = field(compare=False, default=float("nan"))


@dataclass(frozen=True, order=True)
class ContempEdge:
    a: str
    b: str
    orientation: str = field(compare=False, default="undirected")
    statistic: float = field(compare=False, default=float("nan"))
    p_value: float = field(compare=False, default=float("nan"))

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"bad orientation {self.orientation!r}")
        if self.a == self.b:
            raise ValueError("contemporaneous self edges are not allowed")


class CausalGraph:
    """Mixed graph of lagged (directed) and contemporaneous edges."""

    def __init__(self, var_names, tau_max, lagged_edges=(), contemporaneous_edges=(), meta=None):
        self.var_names = list(var_names)
        self.tau_max = int(tau_max)
        known = set(self.var_names)
        lagged = sorted(set(lagged_edges), key=lambda e: (e.source, e.target, e.lag))
        for e in lagged:
            if e.source not in known or e.target not in known:
                raise ValueError("edge refers to an unknown variable")
            if not 1 <= e.lag <= self.tau_max:
                raise ValueError(f"lag {e.lag} outside 1..{self.tau_max}")
        pairs = set()
        contemp = []
        for e in contemporaneous_edges:
            if e.a not in known or e.b not in known:
                raise ValueError("edge refers to an unknown variable")
            # canonical storage: a precedes b in var_names
            if self.var_names.index(e.a) > self.var_names.index(e.b):
                flip = {"a->b": "b->a", "b->a": "a->b"}.get(e.orientation, e.orientation)
                e = ContempEdge(e.b, e.a, flip, e.statistic, e.p_value)
            if (e.a, e.b) in pairs:
                raise ValueError(f"duplicate contemporaneous pair {e.a}-{e.b}")
            pairs.add((e.a, e.b))
            contemp.append(e)
        order = {v: i for i, v in enumerate(self.var_names)}
        self.lagged_edges = tuple(lagged)
        self.contemporaneous_edges = tuple(sorted(contemp, key=lambda e: (order[e.a], order[e.b])))
        self.meta = dict(meta or {})

    @property
    def n_vars(self):
        return len(self.var_names)

    def lagged_links(self):
        return {(e.source, e.target, e.lag) for e in self.lagged_edges}

    def has_link(self, source, target, lag):
        if lag == 0:
            for e in self.contemporaneous_edges:
                if {e.a, e.b} == {source, target}:
                    return True
            return False
        return (source, target, lag) in self.lagged_links()

    def directed_contemporaneous(self):
        """(source, target) pairs of oriented contemporaneous edges."""
        out = []
        for e in self.contemporaneous_edges:
            if e.orientation == "a->b":
                out.append((e.a, e.b))
            elif e.orientation == "b->a":
                out.append((e.b, e.a))
        return out

    def to_json(self):
        return {
            "vars": self.var_names,
            "tau_max": self.tau_max,
            "lagged_edges": [{"src": e.source, "dst": e.target, "lag": e.lag,
                              "stat": e.statistic, "p": e.p_value} for e in self.lagged_edges],
            "contemporaneous_edges": [{"a": e.a, "b": e.b, "orientation": e.orientation,
                                       "stat": e.statistic, "p": e.p_value}
                                      for e in self.contemporaneous_edges],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj):
        lagged = [LaggedEdge(e["src"], e["dst"], int(e["lag"]), float(e["stat"]), float(e["p"]))
                  for e in obj.get("lagged_edges", [])]
        contemp = [ContempEdge(e["a"], e["b"], e["orientation"], float(e["stat"]), float(e["p"]))
                   for e in obj.get("contemporaneous_edges", [])]
        tau_max = obj.get("tau_max", max([e.lag for e in lagged], default=1))
        return cls(obj["vars"], tau_max, lagged, contemp, obj.get("meta"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def __eq__(self, other):
        return isinstance(other, CausalGraph) and self.to_json() == other.to_json()

    def __repr__(self):
        return (f"CausalGraph(n_vars={self.n_vars}, lagged={len(self.lagged_edges)}, "
                f"contemporaneous={len(self.contemporaneous_edges)})")


# ---------------------------------------------------------------------------
# shared machinery


class _Lagged:
    """Aligned access to X_var(t - lag) over a fixed sample window."""

    def __init__(self, ts, max_lag):
        values = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=float)
        self.values = values
        self.T, self.N = values.shape
        self.max_lag = max_lag
        if self.T - max_lag < 4:
            raise ValueError("time series too short for the requested lag")
        stds = values.std(axis=0)
        if np.any(stds == 0):
            raise ValueError("degenerate series: constant column "
                             + ", ".join(str(i) for i in np.flatnonzero(stds == 0)))

    def get(self, var, lag):
        return self.values[self.max_lag - lag:self.T - lag, var]

    def matrix(self, nodes):
        if not nodes:
            return None
        return np.column_stack([self.get(v, lag) for v, lag in nodes])


class _Tester:
    """Runs (and caches) CI tests with seeds derived from the test identity."""

    def __init__(self, data, test, seed):
        self.data = data
        self.test = test
        self.seed = seed
        self.cache = {}

    def __call__(self, x, y, conds):
        conds = tuple(sorted(set(conds)))
        key = (x, y, conds)
        if key not in self.cache:
            s = derive_seed(self.seed, "ci", x, y, conds)
            self.cache[key] = self.test(self.data.get(*x), self.data.get(*y),
                                        self.data.matrix(list(conds)), seed=s)
        return self.cache[key]


def _resolve(ts):
    if isinstance(ts, TimeSeries):
        return ts
    return TimeSeries(np.asarray(ts, dtype=float), [f"X{i + 1}" for i in range(np.shape(ts)[1])])


# ---------------------------------------------------------------------------
# PC1 condition selection


class ParentSets(dict):
    """Maps target index to an ordered list of ``((source, lag), statistic)``.

    Lists are sorted by descending ``|statistic|``.
    """

    def nodes(self, target):
        return [node for node, _ in self.get(target, [])]

    def named(self, var_names):
        return {var_names[j]: [(var_names[s], lag, stat) for (s, lag), stat in lst]
                for j, lst in self.items()}


def _pc1_single(tester, target, N, tau_max, alpha, max_conds_dim):
    y = (target, 0)
    stat = {}
    parents = []
    for src in range(N):
        for lag in range(1, tau_max + 1):
            res = tester((src, lag), y, ())
            if res.p_value < alpha:
                parents.append((src, lag))
                stat[(src, lag)] = abs(res.statistic)
    parents.sort(key=lambda n: (-stat[n], n))
    p = 1
    limit = max_conds_dim if max_conds_dim is not None else np.inf
    while len(parents) - 1 >= p and p <= limit:
        for cand in list(parents):
            if cand not in parents:
                continue
            conds = [q for q in parents if q != cand][:p]
            res = tester(cand, y, conds)
            if res.p_value >= alpha:
                parents.remove(cand)
            else:
                stat[cand] = min(stat[cand], abs(res.statistic))
        parents.sort(key=lambda n: (-stat[n], n))
        p += 1
    return target, [(n, stat[n]) for n in parents]


def pc1_lagged(ts, tau_max=1, alpha=0.01, test="parcorr", seed=0, max_conds_dim=None,
               n_jobs=None, _tester=None):
    """Iterative condition selection for lagged parents (PC1).

    Iteration 0 keeps every ``X_j(t - tau)`` that is unconditionally
    dependent on ``X_i(t)``. Iteration ``p`` retests each surviving candidate
    given the ``p`` strongest other survivors and drops it when
    ``p_value >= alpha``. The loop ends once no conditioning set of size
    ``p`` exists.
    """
    ts = _resolve(ts)
    if ts.T <= tau_max + 3:
        raise ValueError("need T > tau_max + 3")
    tester = _tester or _Tester(_Lagged(ts, 2 * tau_max), get_test(test), seed)
    if n_jobs in (None, 1):
        results = [_pc1_single(tester, i, ts.N, tau_max, alpha, max_conds_dim) for i in range(ts.N)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_pc1_single)(tester, i, ts.N, tau_max, alpha, max_conds_dim) for i in range(ts.N))
    return ParentSets(results)


# ---------------------------------------------------------------------------
# MCI


def _mci_conditions(parents, target, node, p_j):
    src, lag = node
    conds = [q for q in parents.nodes(target) if q != node]
    conds += [(s, l + lag) for s, l in parents.nodes(src)[:p_j]]
    return conds


def mci_prune(ts, parents, tau_max=1, alpha=0.01, test="parcorr", p_j=3, seed=0, _tester=None):
    """Momentary conditional independence test on each PC1 candidate.

    ``X_j(t - tau) -> X_i(t)`` is kept iff the two are dependent given the
    parents of ``X_i(t)`` (minus the candidate) and the ``p_j`` strongest
    parents of ``X_j(t - tau)``. Returns a list of :class:`LaggedEdge`.
    """
    ts = _resolve(ts)
    tester = _tester or _Tester(_Lagged(ts, 2 * tau_max), get_test(test), seed)
    names = ts.var_names
    edges = []
    for target in sorted(parents):
        for node in parents.nodes(target):
            res = tester(node, (target, 0), _mci_conditions(parents, target, node, p_j))
            if res.p_value < alpha:
                edges.append(LaggedEdge(names[node[0]], names[target], node[1],
                                        res.statistic, res.p_value))
    return sorted(edges)


# ---------------------------------------------------------------------------
# PCMCI+ skeleton with contemporaneous conditions


def _link_conditions(parents, target, node, p_j):
    """Lagged conditions for testing ``node -> X_target(t)``."""
    src, lag = node
    conds = [q for q in parents.nodes(target) if q != node]
    if lag == 0:
        conds += parents.nodes(src)
    else:
        conds += [(s, l + lag) for s, l in parents.nodes(src)[:p_j]]
    return conds


def _test_link(tester, parents, link, adj_snapshot, level, alpha, p_j):
    """Run all level-``level`` tests for one link until one accepts independence.

    Returns ``(removed, sepset, statistic, max_p)``.
    """
    node, target = link
    src, lag = node
    base = _link_conditions(parents, target, node, p_j)
    if lag == 0:
        pools = [sorted(adj_snapshot[target] - {src}), sorted(adj_snapshot[src] - {target})]
    else:
        pools = [sorted(adj_snapshot[target])]
    tried = set()
    worst_p, worst_stat = -1.0, float("nan")
    for pool in pools:
        for subset in itertools.combinations(pool, level):
            if subset in tried:
                continue
            tried.add(subset)
            res = tester(node, (target, 0), base + [(s, 0) for s in subset])
            if res.p_value > worst_p:
                worst_p, worst_stat = res.p_value, res.statistic
            if res.p_value >= alpha:
                return True, frozenset(subset), res.statistic, res.p_value
    return False, None, worst_stat, worst_p


def _skeleton(tester, parents, N, alpha, p_j, max_conds_contemp, n_jobs):
    # links: lagged candidates from PC1 plus every contemporaneous pair (i < j)
    lagged = {(node, t) for t in range(N) for node in parents.nodes(t)}
    contemp = {(i, j) for i in range(N) for j in range(i + 1, N)}
    adj = {i: set(range(N)) - {i} for i in range(N)}
    info = {}
    sepsets = {}
    level = 0
    while True:
        snapshot = {i: set(a) for i, a in adj.items()}
        todo = []
        for node, t in sorted(lagged):
            if len(snapshot[t]) >= level:
                todo.append(((node, t), "lag"))
        for i, j in sorted(contemp):
            if len(snapshot[j] - {i}) >= level or len(snapshot[i] - {j}) >= level:
                todo.append((((i, 0), j), "con"))
        if not todo or level > max_conds_contemp:
            break
        if n_jobs in (None, 1):
            results = [_test_link(tester, parents, link, snapshot, level, alpha, p_j) for link, _ in todo]
        else:
            results = Parallel(n_jobs=n_jobs)(
                delayed(_test_link)(tester, parents, link, snapshot, level, alpha, p_j) for link, _ in todo)
        for (link, kind), (removed, sepset, stat, pval) in zip(todo, results):
            prev = info.get(link)
            if prev is None or pval > prev[1]:
                info[link] = (stat, pval)
            if removed:
                if kind == "lag":
                    lagged.discard(link)
                else:
                    (i, _), j = link
                    contemp.discard((i, j))
                    adj[i].discard(j)
                    adj[j].discard(i)
                sepsets[link] = sepset
        level += 1
    return lagged, contemp, info, sepsets


# ---------------------------------------------------------------------------
# orientation of contemporaneous links


def _orient(N, lagged, contemp, sepsets):
    """Collider orientation, then the propagation rules, on time-t nodes.

    Returns ``{(i, j): orientation}`` for each contemporaneous pair ``i < j``.
    """
    state = {pair: "undirected" for pair in contemp}
    cadj = {i: set() for i in range(N)}
    for i, j in contemp:
        cadj[i].add(j)
        cadj[j].add(i)
    lag_parents = {t: sorted(node for node, tt in lagged if tt == t) for t in range(N)}

    def sepset(node, target):
        key = (node, target)
        if key in sepsets:
            return sepsets[key]
        if node[1] == 0:
            alt = ((target, 0), node[0])
            return sepsets.get(alt, frozenset())
        # lagged pair removed during condition selection: no time-t conditions
        return frozenset()

    def adjacent_lagged(node, t):
        return (node, t) in lagged

    proposals = {}

    def propose(src, dst):
        key = (min(src, dst), max(src, dst))
        proposals.setdefault(key, set()).add("a->b" if src < dst else "b->a")

    # contemporaneous unshielded triples i - k - j
    for k in range(N):
        for i, j in itertools.combinations(sorted(cadj[k]), 2):
            if j in cadj[i]:
                continue
            if k not in sepset((i, 0), j):
                propose(i, k)
                propose(j, k)
    # lagged unshielded triples X_i(t-tau) -> X_k(t) - X_j(t)
    for k in range(N):
        for node in lag_parents[k]:
            for j in sorted(cadj[k]):
                if adjacent_lagged(node, j):
                    continue
                if k not in sepset(node, j):
                    propose(j, k)
    for key, props in sorted(proposals.items()):
        state[key] = "conflicting" if len(props) > 1 else next(iter(props))

    def directed(a, b):
        key = (min(a, b), max(a, b))
        s = state.get(key)
        return s == ("a->b" if a < b else "b->a")

    def undirected(a, b):
        return state.get((min(a, b), max(a, b))) == "undirected"

    def set_dir(a, b):
        state[(min(a, b), max(a, b))] = "a->b" if a < b else "b->a"

    changed = True
    while changed:
        changed = False
        # R1: a -> b - c with a, c non-adjacent  =>  b -> c (a may be lagged)
        for b in range(N):
            for c in sorted(cadj[b]):
                if not undirected(b, c):
                    continue
                if any(directed(a, b) and a != c and c not in cadj[a] for a in sorted(cadj[b])) or \
                        any(not adjacent_lagged(node, c) for node in lag_parents[b]):
                    set_dir(b, c)
                    changed = True
        # R2: a -> b -> c and a - c  =>  a -> c
        for a in range(N):
            for c in sorted(cadj[a]):
                if undirected(a, c) and any(directed(a, b) and directed(b, c) for b in sorted(cadj[a] & cadj[c])):
                    set_dir(a, c)
                    changed = True
        # R3: a - c -> b, a - d -> b, c, d non-adjacent, a - b  =>  a -> b
        for a in range(N):
            for b in sorted(cadj[a]):
                if not undirected(a, b):
                    continue
                mids = [m for m in sorted(cadj[a] & cadj[b]) if undirected(a, m) and directed(m, b)]
                if any(d not in cadj[c] for c, d in itertools.combinations(mids, 2)):
                    set_dir(a, b)
                    changed = True
    return state


# ---------------------------------------------------------------------------
# public discovery entry points


def _graph_meta(method, **params):
    return {"method": method, "version": __version__, **params}


def pcmci_plus(ts, tau_max=1, alpha=0.01, test="cmiknn", p_j=3, seed=0, max_conds_contemp=3,
               n_jobs=None, test_params=None):
    """PCMCI+ discovery of lagged and contemporaneous links.

    Steps: PC1 condition selection for lagged parents, then a PC-style
    skeleton phase over lagged candidates and all same-time pairs whose
    level-0 tests are MCI tests and whose higher levels add up to
    ``max_conds_contemp`` contemporaneous neighbours, then collider and
    propagation rules for the contemporaneous links. Lagged links are
    oriented by time.
    """
    ts = _resolve(ts)
    ci = get_test(test, alpha=alpha, **(test_params or {}))
    tester = _Tester(_Lagged(ts, 2 * tau_max), ci, seed)
    parents = pc1_lagged(ts, tau_max, alpha, ci, seed, n_jobs=n_jobs, _tester=tester)
    lagged, contemp, info, sepsets = _skeleton(tester, parents, ts.N, alpha, p_j,
                                               max_conds_contemp, n_jobs)
    state = _orient(ts.N, lagged, contemp, sepsets)
    names = ts.var_names
    lagged_edges = []
    for node, t in sorted(lagged):
        stat, pval = info[(node, t)]
        lagged_edges.append(LaggedEdge(names[node[0]], names[t], node[1], stat, pval))
    contemp_edges = []
    for i, j in sorted(contemp):
        stat, pval = info[((i, 0), j)]
        contemp_edges.append(ContempEdge(names[i], names[j], state[(i, j)], stat, pval))
    meta = _graph_meta("pcmci+", tau_max=tau_max, alpha=alpha, test=ci.get_params(), p_j=p_j,
                       seed=seed, max_conds_contemp=max_conds_contemp, n_samples=ts.T)
    graph = CausalGraph(names, tau_max, lagged_edges, contemp_edges, meta)
    graph.parents_ = parents
    return graph


def var_granger(ts, lag=1, alpha=0.01):
    """VAR(lag) fitted by OLS; edge iff the coefficient's t-test has p < alpha.

    The edge statistic is the estimated coefficient.
    """
    ts = _resolve(ts)
    X = ts.values
    T, N = X.shape
    if T <= N * lag + 3:
        raise ValueError("need T > N * lag + 3")
    rows = np.arange(lag, T)
    cols = [(j, l) for l in range(1, lag + 1) for j in range(N)]
    design = np.column_stack([np.ones(len(rows))] + [X[rows - l, j] for j, l in cols])
    xtx = design.T @ design
    if np.linalg.matrix_rank(xtx) < xtx.shape[0]:
        raise np.linalg.LinAlgError("singular VAR design matrix")
    xtx_inv = np.linalg.inv(xtx)
    dof = len(rows) - design.shape[1]
    edges = []
    for i in range(N):
        y = X[rows, i]
        beta = xtx_inv @ design.T @ y
        resid = y - design @ beta
        sigma2 = resid @ resid / dof
        se = np.sqrt(sigma2 * np.diag(xtx_inv))
        tvals = beta / se
        pvals = 2.0 * stats.t.sf(np.abs(tvals), dof)
        for c, (j, l) in enumerate(cols, start=1):
            if pvals[c] < alpha:
                edges.append(LaggedEdge(ts.var_names[j], ts.var_names[i], l, float(beta[c]), float(pvals[c])))
    meta = _graph_meta("var", lag=lag, alpha=alpha, n_samples=T)
    return CausalGraph(ts.var_names, lag, edges, (), meta)


def te_discovery(ts, lag=1, alpha=0.01, n_bins=8, n_surrogates=200, seed=0):
    """Pairwise transfer entropy for every ordered pair of distinct variables and lag."""
    ts = _resolve(ts)
    edges = []
    for i, j in itertools.permutations(range(ts.N), 2):
        for l in range(1, lag + 1):
            res = transfer_entropy(ts.values[:, i], ts.values[:, j], l, n_bins=n_bins,
                                   n_surrogates=n_surrogates, seed=derive_seed(seed, "te", i, j, l),
                                   alpha=alpha)
            if res.dependent:
                edges.append(LaggedEdge(ts.var_names[i], ts.var_names[j], l, res.statistic, res.p_value))
    meta = _graph_meta("te", lag=lag, alpha=alpha, n_bins=n_bins, n_surrogates=n_surrogates, seed=seed,
                       n_samples=ts.T)
    return CausalGraph(ts.var_names, lag, edges, (), meta)


def discover(ts, method="pcmci+", **params):
    """Dispatch to a discovery method by name: pcmci+, var or te."""
    if method in ("pcmci+", "pcmciplus"):
        return pcmci_plus(ts, **params)
    if method == "var":
        return var_granger(ts, **params)
    if method == "te":
        return te_discovery(ts, **params)
    raise ValueError(f"unknown discovery method {method!r}")


class PCMCIPlus(BaseEstimator):
    """Estimator wrapper around :func:`pcmci_plus`.

    ``fit(X)`` takes a T x N array (or a :class:`TimeSeries`) and stores the
    result in ``graph_`` and the PC1 parent sets in ``parents_``.
    """

    def __init__(self, tau_max=1, alpha=0.01, test="cmiknn", k=4, n_perm=200, k_perm=5,
                 p_j=3, max_conds_contemp=3, seed=0, n_jobs=None):
        self.tau_max = tau_max
        self.alpha = alpha
        self.test = test
        self.k = k
        self.n_perm = n_perm
        self.k_perm = k_perm
        self.p_j = p_j
        self.max_conds_contemp = max_conds_contemp
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, X, y=None, var_names=None):
        if not isinstance(X, TimeSeries):
            X = np.asarray(X, dtype=float)
            names = var_names or [f"X{i + 1}" for i in range(X.shape[1])]
            X = TimeSeries(X, names)
        test_params = {"k": self.k, "n_perm": self.n_perm, "k_perm": self.k_perm} \
            if self.test == "cmiknn" else {}
        self.graph_ = pcmci_plus(X, tau_max=self.tau_max, alpha=self.alpha, test=self.test,
                                 p_j=self.p_j, seed=self.seed, max_conds_contemp=self.max_conds_contemp,
                                 n_jobs=self.n_jobs, test_params=test_params)
        self.parents_ = self.graph_.parents_
        self.n_features_in_ = X.N
        return self
