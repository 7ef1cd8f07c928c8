"""Conditional-independence tests and information-theoretic estimators.

Three tests share one result type:

* ``parcorr_test``: partial correlation with a Student-t p-value.
* ``cmi_knn_test``: k-nearest-neighbour conditional mutual information with
  a local-permutation null distribution.
* ``transfer_entropy``: binned transfer entropy with circular-shift
  surrogates.

Each test is also exposed as a small callable class (``ParCorr``,
``CMIknn``) so discovery routines can carry the configuration around and
report it in output metadata.
"""

import zlib
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import digamma

from ._utils import as_conditioning, as_vector, make_rng


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    dependent: bool

    __test__ = False  # not a pytest class


def _result(statistic, p_value, alpha):
    p_value = float(min(max(p_value, 0.0), 1.0))
    return TestResult(float(statistic), p_value, bool(p_value < alpha))


# ---------------------------------------------------------------------------
# partial correlation


def _residualize(v, design):
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    return v - design @ coef


def partial_correlation(x, y, z=None):
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    n = len(x)
    if len(y) != n:
        raise ValueError("x and y must have the same length")
    z = as_conditioning(z, n)
    if n < z.shape[1] + 3:
        raise ValueError("too few samples for the size of the conditioning set")
    design = np.column_stack([np.ones(n), z])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise np.linalg.LinAlgError("rank-deficient conditioning matrix")
    rx = _residualize(x, design)
    ry = _residualize(y, design)
    sx = np.sqrt(rx @ rx)
    sy = np.sqrt(ry @ ry)
    if sx == 0.0 or sy == 0.0:
        raise ValueError("degenerate input: zero residual variance")
    r = float(rx @ ry / (sx * sy))
    return min(max(r, -1.0), 1.0), n - z.shape[1] - 2


def parcorr_test(x, y, z=None, alpha=0.01):
    """Partial correlation of x and y given z, two-sided t-test.

    The statistic is the correlation of the OLS residuals of x and y on
    ``[1, z]``; the p-value uses ``n - dim(z) - 2`` degrees of freedom.
    """
    r, dof = partial_correlation(x, y, z)
    if abs(r) >= 1.0:
        return _result(r, 0.0, alpha)
    t = r * np.sqrt(dof / (1.0 - r * r))
    p = 2.0 * stats.t.sf(abs(t), dof)
    return _result(r, p, alpha)


# ---------------------------------------------------------------------------
# kNN conditional mutual information


def _ranks(v):
    """Ordinal ranks plus a tiny jitter that breaks distance ties.

    The jitter (amplitude 1e-10 * SD of the ranks) is seeded from the
    vector's own bytes, so the transform of each variable does not depend on
    its role, which keeps the estimator exactly symmetric in x and y.
    """
    v = np.ascontiguousarray(v, dtype=float)
    r = stats.rankdata(v, method="ordinal").astype(float)
    rng = np.random.default_rng(zlib.crc32(v.tobytes()))
    return r + 1e-10 * r.std() * rng.random(len(r))


def _abs_diff(col):
    return np.abs(col[:, None] - col[None, :])


def _max_dist(mat):
    n = mat.shape[0]
    if mat.shape[1] == 0:
        return np.zeros((n, n))
    out = _abs_diff(mat[:, 0])
    for c in range(1, mat.shape[1]):
        np.maximum(out, _abs_diff(mat[:, c]), out=out)
    return out


class _KnnCMI:
    """Distance matrices for one (x, y, z) triple, reusable across permutations."""

    def __init__(self, x, y, z, k):
        n = len(x)
        if k < 1:
            raise ValueError("k must be at least 1")
        if k >= n - 1:
            raise ValueError("k must be smaller than the number of samples minus one")
        self.n = n
        self.k = k
        self.dx = _abs_diff(_ranks(x))
        self.dy = _abs_diff(_ranks(y))
        self.has_z = z.shape[1] > 0
        rz = np.column_stack([_ranks(z[:, c]) for c in range(z.shape[1])]) if self.has_z else z
        self.dz = _max_dist(rz)
        self.dyz = np.maximum(self.dy, self.dz)
        diag = np.arange(n)
        for m in (self.dx, self.dy, self.dz, self.dyz):
            m[diag, diag] = np.inf

    def estimate(self, perm=None):
        dx = self.dx if perm is None else self.dx[np.ix_(perm, perm)]
        joint = np.maximum(dx, self.dyz)
        eps = np.partition(joint, self.k - 1, axis=1)[:, self.k - 1][:, None]
        dxz = np.maximum(dx, self.dz) if self.has_z else dx
        n_xz = np.sum(dxz < eps, axis=1)
        n_yz = np.sum(self.dyz < eps, axis=1)
        if self.has_z:
            n_z = np.sum(self.dz < eps, axis=1)
            psi_z = digamma(n_z + 1.0)
        else:
            psi_z = digamma(self.n)
        return float(digamma(self.k) - np.mean(digamma(n_xz + 1.0) + digamma(n_yz + 1.0) - psi_z))


def _prepare_cmi(x, y, z, k):
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    n = len(x)
    if len(y) != n:
        raise ValueError("x and y must have the same length")
    z = as_conditioning(z, n)
    if n < k + 2:
        raise ValueError("need at least k + 2 samples")
    return _KnnCMI(x, y, z, k), z


def cmi_knn_estimate(x, y, z=None, k=4):
    """kNN estimate of I(x; y | z) in nats.

    Each marginal is rank-transformed, then the Frenzel-Pompe form
    ``psi(k) - <psi(n_xz + 1) + psi(n_yz + 1) - psi(n_z + 1)>`` is evaluated
    with max-norm balls. With empty z this reduces to the KSG mutual
    information estimator. The result can be slightly negative.
    """
    est, _ = _prepare_cmi(x, y, z, k)
    return est.estimate()


def z_neighbors(z_dist, k_perm):
    """Indices of the ``k_perm`` nearest z-neighbours of each sample, itself first."""
    d = z_dist.copy()
    np.fill_diagonal(d, -1.0)
    return np.argsort(d, axis=1, kind="stable")[:, :min(k_perm, d.shape[0])]


def local_permutation(neighbors, rng):
    """Permutation that moves each sample only among its z-space neighbours.

    Samples are visited in random order; each takes the first not-yet-used
    index from its shuffled neighbour list, or the last one when all are
    taken.
    """
    n = neighbors.shape[0]
    rows = rng.permuted(neighbors, axis=1).tolist()
    used = [False] * n
    perm = [0] * n
    for i in rng.permutation(n).tolist():
        row = rows[i]
        pick = row[-1]
        for cand in row:
            if not used[cand]:
                pick = cand
                break
        perm[i] = pick
        used[pick] = True
    return np.asarray(perm, dtype=np.intp)


def cmi_knn_test(x, y, z=None, k=4, n_perm=200, k_perm=5, seed=0, alpha=0.01):
    """CMIknn test: kNN CMI with a local-permutation p-value.

    x is shuffled among the ``k_perm`` nearest z-neighbours of each sample
    (a full shuffle when z is empty), preserving the x-z dependence. The
    p-value is ``(1 + #{null >= observed}) / (n_perm + 1)``.
    """
    if n_perm < 1:
        raise ValueError("n_perm must be positive")
    est, z = _prepare_cmi(x, y, z, k)
    observed = est.estimate()
    rng = make_rng(seed, "cmiknn")
    neighbors = z_neighbors(est.dz, k_perm) if est.has_z else None
    exceed = 0
    for _ in range(n_perm):
        if est.has_z:
            perm = local_permutation(neighbors, rng)
        else:
            perm = rng.permutation(est.n)
        if est.estimate(perm) >= observed:
            exceed += 1
    return _result(observed, (1.0 + exceed) / (n_perm + 1.0), alpha)


# ---------------------------------------------------------------------------
# transfer entropy


def equal_frequency_bins(v, n_bins):
    """Integer bin labels from empirical quantile edges; equal values share a bin."""
    v = np.asarray(v, dtype=float)
    edges = np.quantile(v, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
    return np.searchsorted(edges, v, side="right")


def _entropy(*codes):
    joint = np.zeros(len(codes[0]), dtype=np.int64)
    for c in codes:
        joint = joint * 1024 + c
    _, counts = np.unique(joint, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def _te_plugin(src, tgt_now, tgt_past):
    return (_entropy(tgt_now, tgt_past) + _entropy(src, tgt_past)
            - _entropy(tgt_past) - _entropy(tgt_now, src, tgt_past))


def transfer_entropy(source, target, lag=1, n_bins=8, n_surrogates=200, seed=0, alpha=0.01):
    """Binned TE(source -> target) = I(target_t; source_{t-lag} | target_{t-1}).

    Series are discretised into ``n_bins`` equal-frequency bins. The null
    distribution comes from circularly shifted copies of the binned source.
    """
    source = as_vector(source, "source")
    target = as_vector(target, "target")
    n = len(source)
    if len(target) != n:
        raise ValueError("source and target must have the same length")
    if lag < 1:
        raise ValueError("lag must be at least 1")
    if n <= lag + 2:
        raise ValueError("series too short for the requested lag")
    sb = equal_frequency_bins(source, n_bins)
    tb = equal_frequency_bins(target, n_bins)
    for name, b in (("source", sb), ("target", tb)):
        if len(np.unique(b)) < 3:
            raise ValueError(f"fewer than 3 populated bins in {name}")
    start = max(lag, 1)
    t_idx = np.arange(start, n)
    tgt_now = tb[t_idx]
    tgt_past = tb[t_idx - 1]
    observed = _te_plugin(sb[t_idx - lag], tgt_now, tgt_past)
    rng = make_rng(seed, "te")
    lo, hi = lag + 1, n - lag - 1
    if hi < lo:
        lo, hi = 1, n - 1
    exceed = 0
    for shift in rng.integers(lo, hi + 1, size=n_surrogates):
        rolled = np.roll(sb, int(shift))
        if _te_plugin(rolled[t_idx - lag], tgt_now, tgt_past) >= observed:
            exceed += 1
    return _result(observed, (1.0 + exceed) / (n_surrogates + 1.0), alpha)


# ---------------------------------------------------------------------------
# configured test objects for discovery


class ParCorr:
    name = "parcorr"

    def __init__(self, alpha=0.01):
        self.alpha = alpha

    def __call__(self, x, y, z=None, seed=0):
        return parcorr_test(x, y, z, alpha=self.alpha)

    def get_params(self):
        return {"name": self.name}


class CMIknn:
    name = "cmiknn"

    def __init__(self, k=4, n_perm=200, k_perm=5, alpha=0.01):
        self.k = k
        self.n_perm = n_perm
        self.k_perm = k_perm
        self.alpha = alpha

    def __call__(self, x, y, z=None, seed=0):
        return cmi_knn_test(x, y, z, k=self.k, n_perm=self.n_perm,
                            k_perm=self.k_perm, seed=seed, alpha=self.alpha)

    def get_params(self):
        return {"name": self.name, "k": self.k, "n_perm": self.n_perm, "k_perm": self.k_perm}


def get_test(name, **params):
    if isinstance(name, (ParCorr, CMIknn)):
        return name
    if name == "parcorr":
        return ParCorr(**{k: v for k, v in params.items() if k == "alpha"})
    if name == "cmiknn":
        return CMIknn(**params)
    raise ValueError(f"unknown conditional independence test: {name!r}")
