"""Synthetic structural causal time series with known ground truth.

Random numbers come from numpy's PCG64 generator (``default_rng``), seeded
per call, so the same seed always yields bit-identical output.
"""

from dataclasses import dataclass, field

import numpy as np

from .dataio import TimeSeries

SCENARIOS = ("linear", "interaction", "quadratic")
BURN_IN = 100


@dataclass(frozen=True)
class GroundTruth:
    """Set of true causal links as (source, target, lag) tuples."""

    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset(tuple(e) for e in self.edges)
        for src, dst, lag in edges:
            if lag < 0:
                raise ValueError("lags must be non-negative")
        object.__setattr__(self, "edges", edges)

    def to_json(self):
        return {"edges": [{"src": s, "dst": d, "lag": lag} for s, d, lag in sorted(self.edges)]}

    @classmethod
    def from_json(cls, obj):
        return cls(frozenset((e["src"], e["dst"], int(e["lag"])) for e in obj["edges"]))


def gen_scenario(scenario, T, seed=0, coef=3.0):
    """One of the three benchmark scenarios with X1, X2 iid N(0, 1).

    * linear:      X3_t = 3 X2_{t-1} + e_t
    * interaction: X3_t = 3 X1_{t-1} X2_{t-1} + e_t
    * quadratic:   X3_t = 3 X2_{t-1}^2 + e_t
    """
    scenario = str(scenario).lower()
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    if T < 2:
        raise ValueError("T must be at least 2")
    rng = np.random.default_rng(seed)
    # one extra leading sample gives X3_0 a lagged parent
    x1 = rng.standard_normal(T + 1)
    x2 = rng.standard_normal(T + 1)
    noise = rng.standard_normal(T)
    if scenario == "linear":
        drive = x2[:-1]
        truth = {("X2", "X3", 1)}
    elif scenario == "interaction":
        drive = x1[:-1] * x2[:-1]
        truth = {("X1", "X3", 1), ("X2", "X3", 1)}
    else:
        drive = x2[:-1] ** 2
        truth = {("X2", "X3", 1)}
    x3 = coef * drive + noise
    values = np.column_stack([x1[1:], x2[1:], x3])
    return TimeSeries(values, ["X1", "X2", "X3"]), GroundTruth(frozenset(truth))


@dataclass(frozen=True)
class Term:
    """Additive term ``coef * f(parents)`` in the equation of ``target``.

    ``kind`` is ``"linear"`` (one parent), ``"square"`` (one parent) or
    ``"product"`` (two or more parents). ``parents`` holds (name, lag) pairs.
    """

    target: str
    parents: tuple
    kind: str = "linear"
    coef: float = 1.0

    def __post_init__(self):
        parents = tuple((str(p), int(lag)) for p, lag in self.parents)
        object.__setattr__(self, "parents", parents)
        if self.kind not in ("linear", "square", "product"):
            raise ValueError(f"unknown link function {self.kind!r}")
        if self.kind in ("linear", "square") and len(parents) != 1:
            raise ValueError(f"{self.kind} terms take exactly one parent")
        if self.kind == "product" and len(parents) < 2:
            raise ValueError("product terms take at least two parents")
        if any(lag < 0 for _, lag in parents):
            raise ValueError("lags must be non-negative")


def _contemporaneous_order(names, terms):
    """Topological order of variables under the lag-0 links; raises on cycles."""
    deps = {v: set() for v in names}
    for term in terms:
        for p, lag in term.parents:
            if lag == 0:
                if p == term.target:
                    raise ValueError("contemporaneous self-link makes the model cyclic")
                deps[term.target].add(p)
    order = []
    done = set()
    visiting = set()

    def visit(v):
        if v in done:
            return
        if v in visiting:
            raise ValueError("cyclic contemporaneous structure")
        visiting.add(v)
        for p in sorted(deps[v]):
            visit(p)
        visiting.discard(v)
        done.add(v)
        order.append(v)

    for v in names:
        visit(v)
    return order


def _has_lagged_feedback(names, terms):
    """True when lagged links form a directed cycle (self-links included)."""
    adj = {v: set() for v in names}
    for term in terms:
        for p, lag in term.parents:
            if lag > 0:
                adj[p].add(term.target)
    state = {}

    def dfs(v):
        state[v] = 1
        for w in adj[v]:
            if state.get(w) == 1 or (w not in state and dfs(w)):
                return True
        state[v] = 2
        return False

    return any(v not in state and dfs(v) for v in names)


def gen_scm(terms, T, noise_sd=1.0, seed=0, names=None):
    """Simulate a structural causal time series from additive terms.

    ``terms`` is a sequence of :class:`Term` (or tuples accepted by its
    constructor). Variables are updated in contemporaneous topological
    order. When lagged links feed back on themselves, the first 100 steps
    are discarded as burn-in.
    """
    terms = [t if isinstance(t, Term) else Term(*t) for t in terms]
    if names is None:
        seen = []
        for term in terms:
            for v in [p for p, _ in term.parents] + [term.target]:
                if v not in seen:
                    seen.append(v)
        names = sorted(seen)
    names = list(names)
    if not names:
        raise ValueError("no variables")
    known = set(names)
    for term in terms:
        if term.target not in known or any(p not in known for p, _ in term.parents):
            raise ValueError("term refers to an unknown variable")
    max_lag = max((lag for t in terms for _, lag in t.parents), default=0)
    if T < max_lag + 1:
        raise ValueError("T must be at least max lag + 1")
    order = _contemporaneous_order(names, terms)
    burn = BURN_IN if _has_lagged_feedback(names, terms) else 0
    total = T + burn + max_lag
    idx = {v: i for i, v in enumerate(names)}
    rng = np.random.default_rng(seed)
    data = noise_sd * rng.standard_normal((total, len(names)))
    by_target = {v: [t for t in terms if t.target == v] for v in names}
    for t in range(max_lag, total):
        for v in order:
            acc = 0.0
            for term in by_target[v]:
                vals = [data[t - lag, idx[p]] for p, lag in term.parents]
                if term.kind == "linear":
                    acc += term.coef * vals[0]
                elif term.kind == "square":
                    acc += term.coef * vals[0] ** 2
                else:
                    acc += term.coef * float(np.prod(vals))
            data[t, idx[v]] += acc
    values = data[burn + max_lag:]
    truth = GroundTruth(frozenset((p, term.target, lag) for term in terms for p, lag in term.parents))
    return TimeSeries(values, names), truth
