"""Bagged decision trees, OOB permutation importance, Boruta-type selection,
leave-one-individual-out validation and ROC threshold choice.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.tree import DecisionTreeClassifier
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._utils import derive_seed, make_rng

log = logging.getLogger(__name__)

POSITIVE = "MDD"


def _fit_tree(X, y_idx, weights, seed):
    tree = DecisionTreeClassifier(criterion="gini", max_features=None, min_samples_leaf=1,
                                  random_state=seed)
    tree.fit(X, y_idx, sample_weight=weights)
    return tree


class BaggedTreeClassifier(ClassifierMixin, BaseEstimator):
    """Bootstrap-aggregated Gini trees that search every column at each split.

    Class weights ``total / (n_classes * count_c)`` enter both the impurity
    and the leaf votes through per-row sample weights. ``predict_proba`` is
    the fraction of trees voting for each class. With
    ``bootstrap="individual"`` whole individuals (``groups`` in ``fit``)
    are resampled instead of rows.
    """

    def __init__(self, n_estimators=300, random_state=0, class_weight="balanced", bootstrap="rows",
                 n_jobs=None):
        self.n_estimators = n_estimators
        self.random_state = random_state
        self.class_weight = class_weight
        self.bootstrap = bootstrap
        self.n_jobs = n_jobs

    def _inbag_counts(self, n, groups):
        counts = np.zeros((self.n_estimators, n), dtype=int)
        if self.bootstrap == "rows":
            for t in range(self.n_estimators):
                rng = make_rng(self.random_state, "bootstrap", t)
                counts[t] = np.bincount(rng.integers(0, n, n), minlength=n)
        elif self.bootstrap == "individual":
            if groups is None:
                raise ValueError("individual bootstrap needs groups")
            groups = np.asarray(groups)
            uniq = np.unique(groups)
            member = [np.flatnonzero(groups == g) for g in uniq]
            for t in range(self.n_estimators):
                rng = make_rng(self.random_state, "bootstrap", t)
                for g in rng.integers(0, len(uniq), len(uniq)):
                    counts[t, member[g]] += 1
        else:
            raise ValueError("bootstrap must be 'rows' or 'individual'")
        return counts

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y, dtype=float, ensure_all_finite=True)
        classes, y_idx = np.unique(y, return_inverse=True)
        if len(classes) < 2:
            raise ValueError("training data contains a single class")
        n = len(y)
        if self.class_weight == "balanced":
            cw = n / (len(classes) * np.bincount(y_idx))
        elif self.class_weight is None:
            cw = np.ones(len(classes))
        else:
            cw = np.array([float(self.class_weight[c]) for c in classes])
        counts = self._inbag_counts(n, groups)
        seeds = [derive_seed(self.random_state, "tree", t) for t in range(self.n_estimators)]
        jobs = (delayed(_fit_tree)(X, y_idx, counts[t] * cw[y_idx], seeds[t]) for t in range(self.n_estimators))
        if self.n_jobs in (None, 1):
            trees = [_fit_tree(X, y_idx, counts[t] * cw[y_idx], seeds[t]) for t in range(self.n_estimators)]
        else:
            trees = Parallel(n_jobs=self.n_jobs)(jobs)
        self.classes_ = classes
        self.class_weight_ = cw
        self.estimators_ = trees
        self.inbag_counts_ = counts
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return X

    def tree_votes(self, X):
        """(n_trees, n_rows) array of class indices predicted by each tree."""
        X = self._check(X)
        return np.array([_tree_predict(t, X) for t in self.estimators_])

    def predict_proba(self, X):
        votes = self.tree_votes(X)
        k = len(self.classes_)
        out = np.stack([(votes == c).mean(axis=0) for c in range(k)], axis=1)
        return out

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


def _tree_predict(tree, X):
    # trees are fit on class indices, so leaf value argmax is already an index
    return tree.classes_[np.argmax(tree.predict_proba(X), axis=1)].astype(int)


def oob_error(model, X, y):
    """Mean OOB misclassification rate over trees with at least one OOB row."""
    X = model._check(X)
    y_idx = np.searchsorted(model.classes_, np.asarray(y))
    errs = []
    for t, tree in enumerate(model.estimators_):
        oob = model.inbag_counts_[t] == 0
        if oob.any():
            errs.append(np.mean(_tree_predict(tree, X[oob]) != y_idx[oob]))
    return float(np.mean(errs)) if errs else float("nan")


def oob_predict_proba(model, X):
    """Vote fractions using, for each row, only the trees that did not see it (NaN if none)."""
    X = model._check(X)
    k = len(model.classes_)
    votes = np.zeros((len(X), k))
    for t, tree in enumerate(model.estimators_):
        oob = np.flatnonzero(model.inbag_counts_[t] == 0)
        if oob.size:
            np.add.at(votes, (oob, _tree_predict(tree, X[oob])), 1)
    total = votes.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        return votes / total


def oob_score(model, X, y):
    """Accuracy of the OOB ensemble prediction over rows with at least one OOB tree."""
    proba = oob_predict_proba(model, X)
    ok = np.isfinite(proba).all(axis=1)
    pred = model.classes_[np.argmax(proba[ok], axis=1)]
    return float(np.mean(pred == np.asarray(y)[ok]))


def oob_importance(model, X, y, seed=0):
    """Permuted-predictor delta error per feature.

    For every tree the feature's OOB values are permuted and the increase in
    OOB misclassification is recorded; the score is the mean increase over
    trees divided by its standard deviation across trees. Features a tree
    never splits on contribute an increase of exactly 0 for that tree, and a
    feature with zero spread scores 0. Trees without OOB rows are skipped.
    """
    X = model._check(X)
    y_idx = np.searchsorted(model.classes_, np.asarray(y))
    p = X.shape[1]
    deltas = []
    skipped = 0
    for t, tree in enumerate(model.estimators_):
        oob = np.flatnonzero(model.inbag_counts_[t] == 0)
        if oob.size == 0:
            skipped += 1
            continue
        Xo = X[oob]
        yo = y_idx[oob]
        base = np.mean(_tree_predict(tree, Xo) != yo)
        row = np.zeros(p)
        used = np.unique(tree.tree_.feature[tree.tree_.feature >= 0])
        for j in used:
            rng = make_rng(seed, "oob-permute", t, int(j))
            Xp = Xo.copy()
            Xp[:, j] = Xo[rng.permutation(len(oob)), j]
            row[j] = np.mean(_tree_predict(tree, Xp) != yo) - base
        deltas.append(row)
    if skipped:
        log.warning("%d trees had no OOB rows and were skipped", skipped)
    if not deltas:
        return np.zeros(p)
    d = np.array(deltas)
    mean = d.mean(axis=0)
    sd = d.std(axis=0, ddof=1) if len(d) > 1 else np.zeros(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(sd > 0, mean / np.where(sd > 0, sd, 1.0), 0.0)
    return score


# ---------------------------------------------------------------------------
# validation by individual


@dataclass
class LoocvReport:
    individuals: list
    labels: list
    probabilities: np.ndarray
    row_probabilities: np.ndarray
    positive: str

    def to_json(self):
        return {"positive_class": self.positive,
                "individuals": [{"id": i, "label": lab, "probability": float(p)}
                                for i, lab, p in zip(self.individuals, self.labels, self.probabilities)],
                "row_probabilities": [float(v) for v in self.row_probabilities]}


def _individual_order(groups):
    seen = {}
    for g in groups:
        seen.setdefault(g, len(seen))
    return list(seen)


def loocv_by_individual(X, y, groups, positive=POSITIVE, **model_params):
    """Leave one individual out; each held-out probability is the mean of its row probabilities."""
    X = check_array(X, dtype=float)
    y = np.asarray(y)
    groups = np.asarray(groups)
    inds = _individual_order(groups)
    if len(inds) < 3:
        raise ValueError("need at least 3 individuals")
    row_prob = np.zeros(len(y))
    probs, labels = [], []
    for g in inds:
        test = groups == g
        if not test.any():
            raise ValueError(f"individual {g} has no rows")
        model = BaggedTreeClassifier(**model_params).fit(X[~test], y[~test], groups[~test])
        p = _positive_proba(model, X[test], positive)
        row_prob[test] = p
        probs.append(float(np.mean(p)))
        labs = np.unique(y[test])
        labels.append(str(labs[0]) if len(labs) == 1 else "mixed")
    return LoocvReport([str(g) for g in inds], labels, np.array(probs), row_prob, positive)


def _positive_proba(model, X, positive):
    proba = model.predict_proba(X)
    hit = np.flatnonzero(model.classes_ == positive)
    if hit.size == 0:
        return np.zeros(len(X))
    return proba[:, hit[0]]


@dataclass
class RocReport:
    points: list
    auc: float
    optimal_threshold: float
    sensitivity: float
    specificity: float

    def to_json(self):
        return {"auc": self.auc, "optimal_threshold": self.optimal_threshold,
                "sensitivity": self.sensitivity, "specificity": self.specificity,
                "points": [{"fpr": f, "tpr": t, "threshold": (None if not np.isfinite(th) else th)}
                           for f, t, th in self.points]}


def roc_and_threshold(scores, labels, positive=POSITIVE):
    """ROC over every distinct score with the ``score >= threshold`` rule.

    Points are listed by increasing threshold and include the (0, 0) point
    at threshold +inf. The optimal threshold minimises the distance to
    (0, 1) over the finite thresholds; ties go to the higher threshold.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == positive if labels.dtype.kind not in "b" else labels
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    thresholds = np.unique(scores)[::-1]
    pts = [(0.0, 0.0, float("inf"))]
    for th in thresholds:
        pred = scores >= th
        pts.append((float(np.sum(pred & ~pos) / n_neg), float(np.sum(pred & pos) / n_pos), float(th)))
    fpr = np.array([p[0] for p in pts])
    tpr = np.array([p[1] for p in pts])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    best = None
    for f, t, th in pts[1:]:
        d = np.hypot(f, 1 - t)
        if best is None or d < best[0] or (d == best[0] and th > best[1]):
            best = (d, th, f, t)
    _, th, f, t = best
    return RocReport(points=pts[::-1], auc=auc, optimal_threshold=th, sensitivity=t, specificity=1 - f)


def predict_holdout(model, threshold, X, groups, positive=POSITIVE):
    """Per-individual mean positive probability and class (``p >= threshold`` is positive)."""
    X = model._check(X)
    groups = np.asarray(groups)
    p = _positive_proba(model, X, positive)
    others = [c for c in model.classes_ if c != positive]
    negative = str(others[0]) if others else "other"
    out = []
    for g in _individual_order(groups):
        prob = float(np.mean(p[groups == g]))
        out.append({"id": str(g), "probability": prob, "class": positive if prob >= threshold else negative})
    return out


# ---------------------------------------------------------------------------
# Boruta-type selection


@dataclass
class BorutaResult:
    selected: list
    history: list = field(default_factory=list)
    empty: bool = False

    def to_json(self):
        return {"selected": self.selected, "empty": self.empty, "history": self.history}


def averaged_importance(X, y, groups=None, seed=0, **model_params):
    """OOB importance from one fit, or averaged over leave-one-individual-out fits."""
    if groups is None:
        model = BaggedTreeClassifier(random_state=seed, **model_params).fit(X, y)
        return oob_importance(model, X, y, seed)
    groups = np.asarray(groups)
    scores = []
    for k, g in enumerate(_individual_order(groups)):
        train = groups != g
        fold_seed = derive_seed(seed, "fold", k)
        model = BaggedTreeClassifier(random_state=fold_seed, **model_params).fit(X[train], y[train], groups[train])
        scores.append(oob_importance(model, X[train], y[train], fold_seed))
    return np.mean(scores, axis=0)


def boruta_select(X, y, columns=None, groups=None, seed=0, max_rounds=20, **model_params):
    """Repeatedly drop features with importance <= 0.

    Stops once a round drops nothing (every remaining score is positive, so
    the set has plateaued) or after ``max_rounds``.
    """
    X = check_array(X, dtype=float)
    y = np.asarray(y)
    if X.shape[1] < 2:
        raise ValueError("need at least 2 columns")
    columns = list(columns) if columns is not None else [str(j) for j in range(X.shape[1])]
    alive = list(range(X.shape[1]))
    history = []
    for rnd in range(max_rounds):
        imp = averaged_importance(X[:, alive], y, groups, derive_seed(seed, "boruta", rnd), **model_params)
        ranking = sorted(zip((columns[j] for j in alive), imp), key=lambda kv: (-kv[1], kv[0]))
        keep = [j for j, s in zip(alive, imp) if s > 0]
        history.append({"round": rnd + 1, "n_features": len(alive),
                        "ranking": [{"feature": c, "importance": float(s)} for c, s in ranking],
                        "dropped": [columns[j] for j in alive if j not in set(keep)]})
        if not keep:
            return BorutaResult([], history, empty=True)
        if len(keep) == len(alive):
            break
        alive = keep
    return BorutaResult([columns[j] for j in alive], history)
