"""Spatial weight matrices and spatial diagnostics.

Weight matrices are plain dense ``(n, n)`` float arrays with zero diagonals
and row sums of 1 (all-zero rows mark isolated units and are rejected by
consumers that need a fully connected system). Constructors here always
return row-normalized matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError


@dataclass(frozen=True)
class MoranReport:
    """Moran's I with moments under the normality assumption.

    ``z_score``/``p_value`` (two-sided) use the normal approximation; for
    n == 2 the variance degenerates and the inference fields are NaN.
    """

    statistic: float
    expectation: float
    variance: float
    z_score: float
    p_value: float


def validate_weights(w, allow_isolated: bool = True) -> np.ndarray:
    """Check zero diagonal, non-negativity, and unit (or zero) row sums."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight matrix contains non-finite entries")
    if np.any(np.diag(w) != 0):
        raise ValueError("weight matrix diagonal must be zero")
    if np.any(w < 0):
        raise ValueError("weight matrix entries must be non-negative")
    sums = w.sum(axis=1)
    zero_rows = np.flatnonzero(sums == 0)
    bad = np.flatnonzero((sums != 0) & (np.abs(sums - 1.0) > 1e-10))
    if bad.size:
        raise ValueError(f"rows {bad.tolist()} are neither zero nor normalized (sums {sums[bad]})")
    if zero_rows.size and not allow_isolated:
        raise ValueError(f"isolated units (all-zero rows): {zero_rows.tolist()}")
    return w


def row_normalize(w) -> np.ndarray:
    """Divide each row of a non-negative zero-diagonal matrix by its sum."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {w.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if np.any(np.diag(w) != 0):
        raise ValueError("diagonal must be zero")
    sums = w.sum(axis=1)
    zero_rows = np.flatnonzero(sums == 0)
    if zero_rows.size:
        raise ValueError(f"cannot normalize all-zero rows: units {zero_rows.tolist()}")
    return w / sums[:, None]


def rook_lattice(n_rows: int, n_cols: int) -> np.ndarray:
    """Row-normalized rook-contiguity weights on an R x T grid.

    Units are indexed row-major; two cells are neighbours when they share a
    border (one step horizontally or vertically).
    """
    if n_rows < 1 or n_cols < 1 or n_rows * n_cols < 2:
        raise ValueError("lattice needs at least 2 cells")
    n = n_rows * n_cols
    adj = np.zeros((n, n))
    for r in range(n_rows):
        for c in range(n_cols):
            i = r * n_cols + c
            if c + 1 < n_cols:
                adj[i, i + 1] = adj[i + 1, i] = 1.0
            if r + 1 < n_rows:
                adj[i, i + n_cols] = adj[i + n_cols, i] = 1.0
    return row_normalize(adj)


def great_circle_degrees(lonlat_a, lonlat_b) -> float:
    """Central angle in degrees between two (longitude, latitude) points."""
    lon1, lat1, lon2, lat2 = map(math.radians, (*lonlat_a, *lonlat_b))
    s = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(
        (lon2 - lon1) / 2
    ) ** 2
    return math.degrees(2 * math.asin(min(1.0, math.sqrt(s))))


def pairwise_distances(locations, metric: str = "euclidean") -> np.ndarray:
    """Dense distance matrix; metric is "euclidean" or "greatcircle".

    Great-circle treats columns as (longitude, latitude) in degrees and
    returns central angles in degrees.
    """
    pts = np.asarray(locations, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("locations must be an (n, 2) array")
    n = pts.shape[0]
    if metric == "euclidean":
        diff = pts[:, None, :] - pts[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))
    if metric == "greatcircle":
        dist = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                dist[i, j] = dist[j, i] = great_circle_degrees(pts[i], pts[j])
        return dist
    raise ValueError(f"unknown metric {metric!r}; use 'euclidean' or 'greatcircle'")


def knn_inverse_distance(locations, k: int, cutoff: float, metric: str = "euclidean") -> np.ndarray:
    """Inverse-distance weights over the k nearest neighbours within a cutoff.

    For each unit the k nearest other units with distance <= cutoff are kept
    (ties at the k-th distance resolved toward the lower index), weighted by
    1/distance, then row-normalized. A unit that retains no neighbour is an
    error naming the unit.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    dist = pairwise_distances(locations, metric)
    n = dist.shape[0]
    off_diag = ~np.eye(n, dtype=bool)
    if np.any(dist[off_diag] <= 0):
        raise ValueError("all pairwise distances must be positive (duplicate locations?)")

    w = np.zeros((n, n))
    isolated = []
    for i in range(n):
        others = np.delete(np.arange(n), i)
        eligible = others[dist[i, others] <= cutoff]
        if eligible.size == 0:
            isolated.append(i)
            continue
        # stable sort on distance keeps lower indices first among ties
        order = eligible[np.argsort(dist[i, eligible], kind="stable")]
        keep = order[:k]
        w[i, keep] = 1.0 / dist[i, keep]
    if isolated:
        raise ValueError(f"units with no neighbour within cutoff {cutoff}: {isolated}")
    return row_normalize(w)


def log_det_system(rho: float, w) -> float:
    """ln |det(I - rho W)| via pivoted LU factorization.

    Raises :class:`NumericalError` when the determinant is non-positive or
    vanishes; for row-stochastic W and |rho| < 1 the system is guaranteed
    nonsingular with positive determinant.
    """
    w = np.asarray(w, dtype=float)
    if abs(rho) >= 1.0:
        raise ValueError(f"rho must satisfy |rho| < 1, got {rho}")
    a = -rho * w
    np.fill_diagonal(a, a.diagonal() + 1.0)
    sign, logdet = np.linalg.slogdet(a)
    if sign == 0.0:
        raise NumericalError(f"I - rho W is singular at rho={rho}")
    if sign < 0.0:
        raise NumericalError(f"det(I - rho W) is negative at rho={rho}")
    return float(logdet)


def morans_i(values, w) -> MoranReport:
    """Global Moran's I of ``values`` under weight matrix ``w``.

    I = (n / S0) * (z' W z) / (z' z) with z the centered values. Moments are
    the closed forms under the normality assumption; the p-value is the
    two-sided normal approximation.
    """
    x = np.asarray(values, dtype=float).ravel()
    w = validate_weights(w)
    n = x.size
    if w.shape[0] != n:
        raise ValueError(f"{n} values but {w.shape[0]}x{w.shape[0]} weights")
    if n < 2:
        raise ValueError("need at least 2 units")
    z = x - x.mean()
    denom = float(z @ z)
    if denom == 0.0:
        raise ValueError("values are constant; Moran's I is undefined")
    s0 = float(w.sum())
    if s0 == 0.0:
        raise ValueError("weight matrix is all zero")
    stat = n / s0 * float(z @ w @ z) / denom

    expectation = -1.0 / (n - 1)
    s1 = 0.5 * float(((w + w.T) ** 2).sum())
    s2 = float(((w.sum(axis=1) + w.sum(axis=0)) ** 2).sum())
    var = (n**2 * s1 - n * s2 + 3 * s0**2) / (s0**2 * (n**2 - 1)) - expectation**2
    if var > 0:
        z_score = (stat - expectation) / math.sqrt(var)
        p_value = math.erfc(abs(z_score) / math.sqrt(2))
    else:
        # degenerate configuration (e.g. n == 2): statistic is fine,
        # normal-theory inference is not
        z_score = float("nan")
        p_value = float("nan")
    return MoranReport(stat, expectation, var, z_score, p_value)
