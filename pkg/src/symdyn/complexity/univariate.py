"""Single-series complexity measures."""

import math

import numpy as np

from .recurrence import chebyshev, embed


def zero_crossings(x):
    """Sign changes of ``x - mean(x)``; zeros inherit the previous sign."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two samples")
    d = x - x.mean()
    tol = 1e-12 * max(1.0, float(np.max(np.abs(x))))
    s = np.sign(d)
    s[np.abs(d) <= tol] = 0
    nz = np.flatnonzero(s)
    if nz.size == 0:
        return 0
    # forward-fill zeros; leading zeros take the first non-zero sign
    idx = np.where(s != 0, np.arange(len(s)), 0)
    np.maximum.accumulate(idx, out=idx)
    filled = s[idx]
    filled[:nz[0]] = s[nz[0]]
    return int(np.count_nonzero(filled[1:] != filled[:-1]))


def permutation_entropy(x, m=3, delay=1):
    """Shannon entropy of ordinal patterns normalised by ``log(m!)``.

    Ties are ranked by position (stable argsort).
    """
    if m < 2:
        raise ValueError("order m must be at least 2")
    x = np.asarray(x, dtype=float)
    if len(x) < m * delay + 1:
        raise ValueError("series too short for the pattern order and delay")
    patterns = np.argsort(embed(x, m, delay), axis=1, kind="stable")
    _, counts = np.unique(patterns, axis=0, return_counts=True)
    p = counts / counts.sum()
    h = float(-np.sum(p * np.log(p)))
    return max(0.0, h / math.log(math.factorial(m)))


def sample_entropy_sentinel(n, m):
    """Largest resolvable sample entropy, used when no template pair matches."""
    return math.log(n - m) + math.log(n - m - 1) - math.log(2)


def regularity_entropy(x, kind="sample", m=2, r=0.2):
    """Approximate or sample entropy with tolerance ``r * SD(x)`` (population SD).

    Templates are compared with the Chebyshev distance and match when the
    distance is at most the tolerance. Sample entropy ignores self-matches
    and uses the first ``n - m`` templates at both lengths; when no pair
    matches it returns :func:`sample_entropy_sentinel`.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < m + 2:
        raise ValueError("series too short for template length m")
    tol = r * float(np.std(x))
    if kind == "approximate":
        def phi(mm):
            d = chebyshev(embed(x, mm), embed(x, mm))
            c = np.mean(d <= tol, axis=1)
            return float(np.mean(np.log(c)))
        return phi(m) - phi(m + 1)
    if kind != "sample":
        raise ValueError("kind must be 'approximate' or 'sample'")
    em = embed(x, m)[:n - m]
    em1 = embed(x, m + 1)
    dm = chebyshev(em, em)
    dm1 = chebyshev(em1, em1)
    iu = np.triu_indices(n - m, k=1)
    b = int(np.count_nonzero(dm[iu] <= tol))
    a = int(np.count_nonzero(dm1[iu] <= tol))
    if a == 0 or b == 0:
        return sample_entropy_sentinel(n, m)
    return -math.log(a / b)


def _slope(xs, ys):
    return float(np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)[0])


def hurst_rs(x, min_window=8):
    """Rescaled-range Hurst exponent over dyadic windows min_window..len(x)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    sizes = []
    w = min_window
    while w <= n:
        sizes.append(w)
        w *= 2
    log_n, log_rs = [], []
    for w in sizes:
        k = n // w
        seg = x[:k * w].reshape(k, w)
        dev = np.cumsum(seg - seg.mean(axis=1, keepdims=True), axis=1)
        r = dev.max(axis=1) - dev.min(axis=1)
        s = seg.std(axis=1)
        ok = s > 0
        if ok.any():
            log_n.append(math.log(w))
            log_rs.append(math.log(np.mean(r[ok] / s[ok])))
    if len(log_n) < 4:
        raise ValueError("fewer than 4 window sizes available")
    return _slope(log_n, log_rs)


def dfa(x, n_scales=10, min_scale=4, max_scale=None):
    """Detrended fluctuation analysis exponent with linear detrending.

    Scales are log-spaced integers in ``[min_scale, len(x) / 4]``; each
    scale uses non-overlapping windows taken from both ends of the profile.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    max_scale = max_scale or n // 4
    scales = np.unique(np.round(np.geomspace(min_scale, max_scale, n_scales)).astype(int)) \
        if max_scale >= min_scale else np.array([], dtype=int)
    if len(scales) < 4:
        raise ValueError("fewer than 4 window sizes available")
    profile = np.cumsum(x - x.mean())
    log_n, log_f = [], []
    for s in scales:
        k = n // s
        segs = np.vstack([profile[:k * s].reshape(k, s), profile[n - k * s:].reshape(k, s)])
        t = np.arange(s, dtype=float)
        design = np.column_stack([np.ones(s), t])
        coef, *_ = np.linalg.lstsq(design, segs.T, rcond=None)
        resid = segs.T - design @ coef
        f = math.sqrt(float(np.mean(resid ** 2)))
        if f > 0:
            log_n.append(math.log(s))
            log_f.append(math.log(f))
    if len(log_n) < 4:
        raise ValueError("fewer than 4 window sizes available")
    return _slope(log_n, log_f)


def scaling_exponent(x, kind="dfa", **params):
    """Hurst (rescaled range) or DFA scaling exponent; needs at least 64 samples."""
    if len(x) < 64:
        raise ValueError("need at least 64 samples")
    if kind == "hurst_rs":
        return hurst_rs(x, **params)
    if kind == "dfa":
        return dfa(x, **params)
    raise ValueError("kind must be 'hurst_rs' or 'dfa'")


def higuchi_fd(x, k_max=8):
    x = np.asarray(x, dtype=float)
    n = len(x)
    log_inv_k, log_l = [], []
    for k in range(1, k_max + 1):
        lengths = []
        for m in range(k):
            idx = np.arange(m, n, k)
            if len(idx) < 2:
                continue
            norm = (n - 1) / ((len(idx) - 1) * k)
            lengths.append(np.sum(np.abs(np.diff(x[idx]))) * norm / k)
        mean_len = float(np.mean(lengths)) if lengths else 0.0
        if mean_len > 0:
            log_inv_k.append(math.log(1.0 / k))
            log_l.append(math.log(mean_len))
    if len(log_l) < 2:
        raise ValueError("degenerate series: zero curve length")
    return _slope(log_inv_k, log_l)


def petrosian_fd(x):
    x = np.asarray(x, dtype=float)
    n = len(x)
    d = np.diff(x)
    n_delta = int(np.count_nonzero(d[1:] * d[:-1] < 0))
    return math.log10(n) / (math.log10(n) + math.log10(n / (n + 0.4 * n_delta)))


def correlation_dimension_points(points, q_lo=0.02, q_hi=0.25, n_radii=10):
    """Grassberger-Procaccia slope of log C(eps) against log eps.

    ``C(eps)`` is the fraction of point pairs closer than ``eps`` (Chebyshev
    distance). Radii are log-spaced between the ``q_lo`` and ``q_hi``
    quantiles of the positive pairwise distances.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    d = chebyshev(points, points)[np.triu_indices(len(points), k=1)]
    pos = d[d > 0]
    if pos.size == 0:
        raise ValueError("degenerate embedding: all points identical")
    lo, hi = np.quantile(pos, [q_lo, q_hi])
    if not hi > lo:
        raise ValueError("degenerate embedding: no scaling range")
    radii = np.geomspace(lo, hi, n_radii)
    d_sorted = np.sort(d)
    c = np.searchsorted(d_sorted, radii, side="left") / len(d)
    ok = c > 0
    if np.count_nonzero(ok) < 3:
        raise ValueError("degenerate embedding: too few populated radii")
    return _slope(np.log(radii[ok]), np.log(c[ok]))


def fractal_dimension(x, kind="higuchi", **params):
    """Higuchi, Petrosian or correlation (Grassberger-Procaccia) dimension."""
    x = np.asarray(x, dtype=float)
    if kind == "higuchi":
        if len(x) < 16:
            raise ValueError("need at least 16 samples")
        return higuchi_fd(x, **params)
    if kind == "petrosian":
        if len(x) < 16:
            raise ValueError("need at least 16 samples")
        return petrosian_fd(x)
    if kind == "correlation":
        if len(x) < 100:
            raise ValueError("need at least 100 samples")
        m = params.pop("m", 2)
        delay = params.pop("delay", 1)
        return correlation_dimension_points(embed(x, m, delay), **params)
    raise ValueError("kind must be 'higuchi', 'petrosian' or 'correlation'")
