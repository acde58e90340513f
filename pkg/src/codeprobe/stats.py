"""Moments, correlations and LOESS smoothing for metric reports."""

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata


class DegenerateSampleError(ValueError):
    pass


def _central_moments(xs, min_n):
    x = np.asarray(xs, dtype=np.float64)
    if x.ndim != 1 or x.size < min_n:
        raise DegenerateSampleError(f"degenerate sample: need at least {min_n} values")
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    if m2 <= 0.0 or np.all(x == x[0]):
        raise DegenerateSampleError("degenerate sample: zero variance")
    return d, m2


def skewness(xs: Sequence[float]) -> float:
    """Biased sample skewness m3 / m2**1.5."""
    d, m2 = _central_moments(xs, 3)
    return float(np.mean(d ** 3) / m2 ** 1.5)


def excess_kurtosis(xs: Sequence[float]) -> float:
    """Biased sample excess kurtosis m4 / m2**2 - 3."""
    d, m2 = _central_moments(xs, 4)
    return float(np.mean(d ** 4) / m2 ** 2 - 3.0)


def pearson(x, y) -> float:
    """Pearson correlation; 0 with a warning when exactly one side is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("correlation inputs differ in length")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(np.dot(dx, dx)))
    sy = math.sqrt(float(np.dot(dy, dy)))
    x_const = sx == 0.0 or np.all(x == x[0])
    y_const = sy == 0.0 or np.all(y == y[0])
    if x_const and y_const:
        raise ValueError("zero variance in both inputs")
    if x_const or y_const:
        warnings.warn("one input is constant; correlation set to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    r = float(np.dot(dx, dy)) / (sx * sy)
    return max(-1.0, min(1.0, r))


def spearman(x, y) -> float:
    return pearson(rankdata(x), rankdata(y))


def correlation(x, y, kind: str = "pearson") -> float:
    if kind == "pearson":
        return pearson(x, y)
    if kind == "spearman":
        return spearman(x, y)
    raise ValueError(f"unknown correlation kind {kind!r}")


def metric_correlation(xs: Sequence[float], ys: Sequence[float], kind: str = "pearson") -> float:
    """Correlation of two metrics across matched configurations."""
    if len(xs) != len(ys):
        raise ValueError("metric series differ in length")
    if len(xs) < 3:
        raise ValueError("need at least 3 matched configurations")
    return correlation(xs, ys, kind)


def loess(points: Sequence[Tuple[float, float]], span: float = 0.75,
          degree: int = 1) -> List[Tuple[float, float]]:
    """Locally weighted linear regression evaluated at each input x.

    The window for x_i holds its ``ceil(span * n)`` nearest neighbours and
    the tricube weights are scaled by the distance h_i to the farthest of
    them, so that neighbour itself gets weight 0. A window whose positive
    weights sit on a single x value falls back to the weighted mean of y.
    Single pass, no robustness iterations.
    """
    if degree != 1:
        raise ValueError("only degree 1 is supported")
    if not 0 < span <= 1:
        raise ValueError("span must lie in (0, 1]")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = pts.shape[0]
    q = int(math.ceil(span * n - 1e-9))
    if n < 3 or q < degree + 1:
        raise ValueError(f"insufficient points in LOESS window: n={n}, span={span}")
    x, y = pts[:, 0], pts[:, 1]
    fitted = np.empty(n)
    for i in range(n):
        dist = np.abs(x - x[i])
        h = np.partition(dist, q - 1)[q - 1]
        if h > 0.0:
            u = dist / h
            w = np.where(u < 1.0, (1.0 - u ** 3) ** 3, 0.0)
        else:
            w = (dist == 0.0).astype(np.float64)
        used = w > 0
        if np.unique(x[used]).size < degree + 1:
            fitted[i] = float(np.dot(w[used], y[used]) / w[used].sum())
            continue
        sw = np.sqrt(w[used])
        design = np.stack([np.ones(used.sum()), x[used] - x[i]], axis=1)
        coef, *_ = np.linalg.lstsq(design * sw[:, None], y[used] * sw, rcond=None)
        fitted[i] = coef[0]
    return [(float(a), float(b)) for a, b in zip(x, fitted)]


@dataclass
class MetricSeries:
    """(x, y, group) points, e.g. metric value against log2 codebook size."""

    points: List[Tuple[float, float, str]] = field(default_factory=list)

    def add(self, x: float, y: float, group: str = "") -> None:
        self.points.append((float(x), float(y), group))

    def groups(self) -> Dict[str, List[Tuple[float, float]]]:
        out = defaultdict(list)
        for x, y, g in self.points:
            out[g].append((x, y))
        return dict(out)

    def smooth(self, span: float = 0.75) -> Dict[str, List[Tuple[float, float]]]:
        """LOESS curve per group, evaluated at the group's distinct x values."""
        curves = {}
        for g, pts in sorted(self.groups().items()):
            fit = dict(loess(pts, span=span))
            curves[g] = sorted(fit.items())
        return curves
