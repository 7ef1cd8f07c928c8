"""Complexity-feature extraction over a parameter grid.

Each individual yields one row per grid configuration. Columns are
``<metric>__<var>`` for the univariate battery and
``cross_<metric>__<a>__<b>`` for cross-recurrence measures of every ordered
pair of distinct variables.
"""

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin

from .recurrence import FIELDS, chebyshev, diagonals, embed, rqa_from_points, run_lengths, _line_stats, RQAResult
from .univariate import (fractal_dimension, permutation_entropy, regularity_entropy, scaling_exponent,
                         zero_crossings)

log = logging.getLogger(__name__)

RQA_METRICS = FIELDS
UNIVARIATE_METRICS = ("zero_crossings", "permutation_entropy", "approximate_entropy", "sample_entropy",
                      "hurst_exponent", "dfa", "correlation_dimension", "higuchi_fd", "petrosian_fd") + RQA_METRICS
CROSS_METRICS = RQA_METRICS


@dataclass(frozen=True)
class FeatureGrid:
    m: tuple = (2, 3)
    delay: tuple = (1, 2)
    q: tuple = (0.10, 0.15, 0.20)
    r: tuple = (0.15, 0.2, 0.25)
    l_min: int = 2
    v_min: int = 2
    k_max: int = 8

    def configs(self):
        """Grid points in a fixed order, as ``(config_id, params)`` pairs."""
        out = []
        for m, d, q, r in itertools.product(self.m, self.delay, self.q, self.r):
            cid = f"m{m}_d{d}_q{q:g}_r{r:g}"
            out.append((cid, {"m": m, "delay": d, "q": q, "r": r}))
        if not out:
            raise ValueError("empty parameter grid")
        return out

    @classmethod
    def from_dict(cls, obj):
        known = {"m", "delay", "q", "r", "l_min", "v_min", "k_max"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        kw = {}
        for key, val in obj.items():
            if key in ("m", "delay", "q", "r"):
                val = tuple(val) if isinstance(val, (list, tuple)) else (val,)
            kw[key] = val
        return cls(**kw)

    def to_dict(self):
        return {"m": list(self.m), "delay": list(self.delay), "q": list(self.q), "r": list(self.r),
                "l_min": self.l_min, "v_min": self.v_min, "k_max": self.k_max}


def feature_columns(var_names, ordered_pairs=True):
    uni = [f"{metric}__{v}" for v in var_names for metric in UNIVARIATE_METRICS]
    pairs = itertools.permutations(var_names, 2) if ordered_pairs else itertools.combinations(var_names, 2)
    cross = [f"cross_{metric}__{a}__{b}" for a, b in pairs for metric in CROSS_METRICS]
    return uni + cross


@dataclass
class FeatureMatrix:
    ids: list
    config_ids: list
    labels: list
    columns: list
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.ids), len(self.columns))
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate feature columns")

    @property
    def shape(self):
        return self.values.shape

    def select(self, columns):
        idx = [self.columns.index(c) for c in columns]
        return FeatureMatrix(self.ids, self.config_ids, self.labels, list(columns), self.values[:, idx])

    def subset_rows(self, mask):
        mask = np.asarray(mask, dtype=bool)
        pick = lambda seq: [v for v, keep in zip(seq, mask) if keep]  # noqa: E731
        return FeatureMatrix(pick(self.ids), pick(self.config_ids), pick(self.labels), self.columns,
                             self.values[mask])

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        cols = parts[0].columns
        if any(p.columns != cols for p in parts[1:]):
            raise ValueError("feature matrices have different columns")
        return cls(sum((p.ids for p in parts), []), sum((p.config_ids for p in parts), []),
                   sum((p.labels for p in parts), []), list(cols),
                   np.vstack([p.values for p in parts]) if parts else np.zeros((0, len(cols))))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "config_id", "diagnosis"] + self.columns)
            for i, c, lab, row in zip(self.ids, self.config_ids, self.labels, self.values):
                w.writerow([i, c, lab] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: no header")
        head = rows[0]
        if head[:3] != ["id", "config_id", "diagnosis"]:
            raise ValueError(f"{path}: first columns must be id, config_id, diagnosis")
        body = rows[1:]
        values = np.array([[float(v) for v in r[3:]] for r in body]) if body else np.zeros((0, len(head) - 3))
        return cls([r[0] for r in body], [r[1] for r in body], [r[2] for r in body], head[3:], values)


# ---------------------------------------------------------------------------
# per-individual computation


def _safe(name, fn, *args, **kw):
    try:
        val = float(fn(*args, **kw))
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("%s: %s; using 0.0", name, exc)
        return 0.0
    if not math.isfinite(val):
        log.warning("%s: non-finite value; using 0.0", name)
        return 0.0
    return val


def _rp(ex, ey, q):
    dist = chebyshev(ex, ey)
    top = dist.max()
    if top == 0.0:
        return np.ones(dist.shape, dtype=bool)
    return dist <= q * top


def _cross_pair(points, l_min, v_min):
    """RQA of a cross plot and of its transpose; diagonal lines are shared."""
    nr, nc = points.shape
    rec = int(points.sum())
    rr = rec / (nr * nc)
    d_pts, l_mean, l_max, entr, _ = _line_stats(run_lengths(diagonals(points)), l_min)
    det = d_pts / rec if rec else 0.0
    div = 1.0 / l_max if l_max > 0 else float(max(nr, nc))
    out = []
    for mat in (points.T, points):  # columns of P, then columns of P.T (rows of P)
        v_pts, v_mean, v_max, _, _ = _line_stats(run_lengths(mat), v_min)
        lam = v_pts / rec if rec else 0.0
        out.append(RQAResult(rr=float(rr), det=float(det), lam=float(lam), tt=float(v_mean), l_max=float(l_max),
                             v_max=float(v_max), div=float(div), entr_diag=entr, l_mean=float(l_mean),
                             v_mean=float(v_mean)))
    return out


def _individual_rows(ind, configs, grid, ordered_pairs):
    ts = ind.series
    names = list(ts.var_names)
    cols = {name: np.asarray(ts.column(name), dtype=float) for name in names}
    tag = f"individual {ind.id}"
    fixed = {}
    for v, x in cols.items():
        fixed[v] = {
            "zero_crossings": _safe(f"{tag} {v} zero_crossings", zero_crossings, x),
            "hurst_exponent": _safe(f"{tag} {v} hurst", scaling_exponent, x, "hurst_rs"),
            "dfa": _safe(f"{tag} {v} dfa", scaling_exponent, x, "dfa"),
            "higuchi_fd": _safe(f"{tag} {v} higuchi", fractal_dimension, x, "higuchi", k_max=grid.k_max),
            "petrosian_fd": _safe(f"{tag} {v} petrosian", fractal_dimension, x, "petrosian"),
        }
    cache = {}

    def cached(key, fn):
        if key not in cache:
            cache[key] = fn()
        return cache[key]

    rows = []
    for cid, p in configs:
        m, d, q, r = p["m"], p["delay"], p["q"], p["r"]
        uni = {}
        emb = {}
        for v, x in cols.items():
            feats = dict(fixed[v])
            feats["permutation_entropy"] = cached(("pe", v, m, d), lambda: _safe(
                f"{tag} {v} permutation_entropy", permutation_entropy, x, m, d))
            feats["approximate_entropy"] = cached(("apen", v, m, r), lambda: _safe(
                f"{tag} {v} approximate_entropy", regularity_entropy, x, "approximate", m, r))
            feats["sample_entropy"] = cached(("sampen", v, m, r), lambda: _safe(
                f"{tag} {v} sample_entropy", regularity_entropy, x, "sample", m, r))
            feats["correlation_dimension"] = cached(("cd", v, m, d), lambda: _safe(
                f"{tag} {v} correlation_dimension", fractal_dimension, x, "correlation", m=m, delay=d))
            try:
                emb[v] = embed(x, m, d)
            except ValueError as exc:
                log.warning("%s %s: %s; recurrence features set to 0.0", tag, v, exc)
                emb[v] = None

            def auto_rqa():
                if emb[v] is None or len(emb[v]) < 2:
                    return RQAResult(*([0.0] * len(FIELDS)))
                return rqa_from_points(_rp(emb[v], emb[v], q), True, grid.l_min, grid.v_min)
            res = cached(("rqa", v, m, d, q), auto_rqa)
            feats.update(res.as_dict())
            uni[v] = feats
        row = [uni[v][metric] for v in names for metric in UNIVARIATE_METRICS]
        pairs = itertools.permutations(names, 2) if ordered_pairs else itertools.combinations(names, 2)
        for a, b in pairs:
            key = ("cross",) + tuple(sorted((a, b))) + (m, d, q)
            if key not in cache:
                lo, hi = sorted((a, b))
                if emb[lo] is None or emb[hi] is None or len(emb[lo]) < 2:
                    zero = RQAResult(*([0.0] * len(FIELDS)))
                    cache[key] = (zero, zero)
                else:
                    cache[key] = _cross_pair(_rp(emb[lo], emb[hi], q), grid.l_min, grid.v_min)
            fwd, rev = cache[key]
            res = fwd if a < b else rev
            row.extend(getattr(res, metric) for metric in CROSS_METRICS)
        rows.append((cid, row))
    return rows


def extract_features(individuals, grid=None, n_jobs=None, ordered_pairs=True):
    """Feature rows for one or many individuals (one row per grid configuration).

    Metrics that cannot be computed for a series (too short or degenerate)
    are set to 0.0 and logged. Output order and values do not depend on
    ``n_jobs``.
    """
    if hasattr(individuals, "series"):
        individuals = [individuals]
    individuals = list(individuals)
    if not individuals:
        raise ValueError("no individuals")
    grid = grid or FeatureGrid()
    if isinstance(grid, dict):
        grid = FeatureGrid.from_dict(grid)
    configs = grid.configs()
    names = list(individuals[0].series.var_names)
    for ind in individuals[1:]:
        if list(ind.series.var_names) != names:
            raise ValueError("individuals have different variables")
    if n_jobs in (None, 1):
        results = [_individual_rows(ind, configs, grid, ordered_pairs) for ind in individuals]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_individual_rows)(ind, configs, grid, ordered_pairs) for ind in individuals)
    ids, cids, labels, values = [], [], [], []
    for ind, rows in zip(individuals, results):
        label = getattr(ind.diagnosis, "value", ind.diagnosis)
        for cid, row in rows:
            ids.append(ind.id)
            cids.append(cid)
            labels.append(label)
            values.append(row)
    columns = feature_columns(names, ordered_pairs)
    return FeatureMatrix(ids, cids, labels, columns, np.array(values, dtype=float).reshape(len(ids), len(columns)))


class ComplexityFeatures(TransformerMixin, BaseEstimator):
    """Transformer wrapper: individuals in, :class:`FeatureMatrix` out."""

    def __init__(self, grid=None, n_jobs=None, ordered_pairs=True):
        self.grid = grid
        self.n_jobs = n_jobs
        self.ordered_pairs = ordered_pairs

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        fm = extract_features(X, self.grid, self.n_jobs, self.ordered_pairs)
        self.feature_names_out_ = np.array(fm.columns, dtype=object)
        return fm

    def get_feature_names_out(self, input_features=None):
        return self.feature_names_out_
