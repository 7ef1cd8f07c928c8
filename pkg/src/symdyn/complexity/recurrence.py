"""Recurrence plots and recurrence quantification analysis (RQA).

Conventions (applied identically to every plot):

* distances are Chebyshev distances between delay vectors, recurrence is
  ``distance <= radius``;
* for an auto-recurrence plot the main diagonal (line of identity) is left
  out of the recurrence rate, determinism and all diagonal-line measures;
  vertical-line measures use the full plot;
* only lines of at least ``l_min`` (diagonal) or ``v_min`` (vertical)
  points qualify for determinism, laminarity, means, maxima and entropy.
"""

from dataclasses import asdict, dataclass

import numpy as np


def embed(x, m=1, delay=1):
    """Delay vectors ``[x_i, x_{i+delay}, ..., x_{i+(m-1)delay}]`` as rows."""
    x = np.asarray(x, dtype=float)
    if m < 1 or delay < 1:
        raise ValueError("m and delay must be positive")
    n = len(x) - (m - 1) * delay
    if n < 1:
        raise ValueError("series too short for the embedding")
    return np.column_stack([x[k * delay:k * delay + n] for k in range(m)])


def chebyshev(a, b):
    out = np.abs(a[:, None, 0] - b[None, :, 0])
    for c in range(1, a.shape[1]):
        np.maximum(out, np.abs(a[:, None, c] - b[None, :, c]), out=out)
    return out


@dataclass
class RecurrencePlot:
    points: np.ndarray
    m: int
    delay: int
    radius: float
    cross: bool

    @property
    def shape(self):
        return self.points.shape


def resolve_radius(dist, radius=None, fraction=None):
    """Fixed radius, or ``fraction`` of the largest pairwise distance."""
    if (radius is None) == (fraction is None):
        raise ValueError("give exactly one of radius or fraction")
    if radius is not None:
        if not radius > 0:
            raise ValueError("radius must be positive")
        return float(radius)
    if not fraction > 0:
        raise ValueError("radius fraction must be positive")
    return float(fraction * dist.max())


def recurrence_plot(x, y=None, m=1, delay=1, radius=None, fraction=None):
    """Auto- (``y is None``) or cross-recurrence plot of delay-embedded series.

    Rows index embedded x, columns embedded y. A cross plot of a series with
    itself is an auto plot. When every embedded point coincides the plot is
    all ones whatever the radius policy.
    """
    ex = embed(x, m, delay)
    cross = y is not None and not np.array_equal(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if cross:
        ey = embed(y, m, delay)
        if len(ey) != len(ex):
            raise ValueError("cross recurrence needs equal embedded lengths")
    else:
        ey = ex
    if len(ex) < 2:
        raise ValueError("series too short for the embedding")
    dist = chebyshev(ex, ey)
    eps = resolve_radius(dist, radius, fraction)
    if eps == 0.0 and dist.max() == 0.0:
        points = np.ones(dist.shape, dtype=bool)
    else:
        points = dist <= eps
    return RecurrencePlot(points, m, delay, eps, cross)


# ---------------------------------------------------------------------------
# line statistics


def run_lengths(mat):
    """Lengths of runs of True along axis 1, for every row of a boolean matrix."""
    mat = np.asarray(mat, dtype=bool)
    if mat.size == 0:
        return np.zeros(0, dtype=int)
    padded = np.zeros((mat.shape[0], mat.shape[1] + 2), dtype=np.int8)
    padded[:, 1:-1] = mat
    d = np.diff(padded, axis=1)
    starts = np.nonzero(d == 1)
    ends = np.nonzero(d == -1)
    return ends[1] - starts[1]


def diagonals(mat):
    """Skew a matrix so each diagonal (offset j - i) becomes one row."""
    nr, nc = mat.shape
    i = np.arange(nr)[None, :]
    offs = np.arange(-(nr - 1), nc)[:, None]
    j = i + offs
    valid = (j >= 0) & (j < nc)
    out = np.zeros((nr + nc - 1, nr), dtype=bool)
    ii = np.broadcast_to(i, j.shape)
    out[valid] = mat[ii[valid], j[valid]]
    return out


@dataclass
class RQAResult:
    rr: float
    det: float
    lam: float
    tt: float
    l_max: float
    v_max: float
    div: float
    entr_diag: float
    l_mean: float
    v_mean: float

    def as_dict(self):
        return asdict(self)


FIELDS = ("rr", "det", "lam", "tt", "l_max", "v_max", "div", "entr_diag", "l_mean", "v_mean")


def _line_stats(lengths, min_len):
    q = lengths[lengths >= min_len]
    if q.size == 0:
        return 0, 0.0, 0, 0.0, 0.0
    counts = np.bincount(q)
    counts = counts[counts > 0]
    p = counts / counts.sum()
    entropy = float(-np.sum(p * np.log(p)))
    return int(q.sum()), float(q.mean()), int(q.max()), entropy, q.size


def rqa_from_points(points, auto, l_min=2, v_min=2):
    points = np.asarray(points, dtype=bool)
    nr, nc = points.shape
    if auto:
        off = points.copy()
        np.fill_diagonal(off, False)
        n_pairs = nr * nc - min(nr, nc)
    else:
        off = points
        n_pairs = nr * nc
    rec_off = int(off.sum())
    rr = rec_off / n_pairs if n_pairs else 0.0
    d_points, l_mean, l_max, entr, _ = _line_stats(run_lengths(diagonals(off)), l_min)
    det = d_points / rec_off if rec_off else 0.0
    rec_all = int(points.sum())
    v_points, v_mean, v_max, _, _ = _line_stats(run_lengths(points.T), v_min)
    lam = v_points / rec_all if rec_all else 0.0
    div = 1.0 / l_max if l_max > 0 else float(max(nr, nc))
    return RQAResult(rr=float(rr), det=float(det), lam=float(lam), tt=float(v_mean), l_max=float(l_max),
                     v_max=float(v_max), div=float(div), entr_diag=entr, l_mean=float(l_mean),
                     v_mean=float(v_mean))


def rqa(rp, l_min=2, v_min=2):
    """Recurrence quantification of a plot.

    ``tt`` (trapping time) and ``v_mean`` are both the mean qualifying
    vertical line length. When no diagonal line qualifies, ``l_max`` is 0
    and ``div`` is set to the plot size instead of infinity.
    """
    if rp.points.size == 0:
        raise ValueError("empty recurrence plot")
    return rqa_from_points(rp.points, auto=not rp.cross, l_min=l_min, v_min=v_min)
