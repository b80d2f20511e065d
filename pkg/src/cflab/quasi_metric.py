"""Boundary and interior quasi-metrics with their scaling diagnostics.

Two tags:
  "boundary_szego":  d(x, y) = |g_boundary(x, y)|^(1/2), symmetrized as
                     (d(x,y) + d(y,x))/2; on the unit circle this is exactly
                     |x - y|^(1/2).
  "interior_mcneal": m(x, y) = |P_x(y)| / |d rho(x)| + (squared Euclidean
                     length of the component of y - x orthogonal to the
                     complex gradient direction at x), symmetrized the same
                     way.  The normal part equals |zeta_1| of the sheared
                     special coordinates at x exactly, so this is the
                     anisotropic polydisc gauge expressed without frames.

The interior gauge is meaningful in the tubular region {-rho < TUBE_RHO0};
for base points deeper than that (or with vanishing gradient, e.g. the
origin of the ball) the one-sided gauge falls back to plain Euclidean
distance, which keeps identity of indiscernibles and stays comparable in
size across the switch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain_geometry import DomainModel, _pairwise_levi, d_rho, rho
from .domain_geometry import pairwise_g_boundary, random_boundary_points
from .measures_quadrature import Grid

TUBE_RHO0 = 0.5
BOUNDARY_TAG = "boundary_szego"
INTERIOR_TAG = "interior_mcneal"

_TAGS = (BOUNDARY_TAG, INTERIOR_TAG)


def _check_tag(tag: str) -> None:
    if tag not in _TAGS:
        raise ValueError(f"unknown metric tag {tag!r}")


# ---------------------------------------------------------------------------
# pairwise distances

def pairwise_boundary_dist(dom: DomainModel, X: np.ndarray,
                           Y: np.ndarray) -> np.ndarray:
    """Symmetrized Szego quasi-distance matrix D[i, j] = dist(x_i, y_j)."""
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    A = pairwise_g_boundary(dom, X, Y)      # A[t, s] = g(x_s, y_t)
    B = pairwise_g_boundary(dom, Y, X)      # B[t, s] = g(y_s, x_t)
    return 0.5 * (np.sqrt(np.abs(A)).T + np.sqrt(np.abs(B)))


def _mcneal_oneside(dom: DomainModel, X: np.ndarray, Y: np.ndarray,
                    rho0: float = TUBE_RHO0) -> np.ndarray:
    """One-sided gauge m[i, j] = m(x_i, y_j) with the frame at x_i."""
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    grad = d_rho(dom, X)                                      # (S, n)
    gn2 = (grad.real ** 2 + grad.imag ** 2).sum(axis=-1)      # (S,)
    P = _pairwise_levi(dom, X, Y)                             # (T, S)
    diff = Y[:, None, :] - X[None, :, :]                      # (T, S, n)
    d2 = (diff.real ** 2 + diff.imag ** 2).sum(axis=-1)       # (T, S)
    inner = np.einsum("sn,tsn->ts", grad, diff)               # <d rho, y - x>
    safe = np.maximum(gn2, 1e-300)
    normal = np.abs(P) / np.sqrt(safe)[None, :]
    tangential = np.maximum(d2 - np.abs(inner) ** 2 / safe[None, :], 0.0)
    m = (normal + tangential).T                               # (S, T)
    deep = (-np.asarray(rho(dom, X)) >= rho0) | (gn2 < 1e-16)
    if np.any(deep):
        m[deep] = np.sqrt(d2.T[deep])
    return m


def pairwise_interior_dist(dom: DomainModel, X: np.ndarray, Y: np.ndarray,
                           rho0: float = TUBE_RHO0) -> np.ndarray:
    """Symmetrized interior gauge matrix D[i, j] = dist(x_i, y_j)."""
    return 0.5 * (_mcneal_oneside(dom, X, Y, rho0)
                  + _mcneal_oneside(dom, Y, X, rho0).T)


def dist(dom: DomainModel, tag: str, x, y) -> float:
    """Symmetrized quasi-distance between two points under the tag."""
    _check_tag(tag)
    x = np.asarray(x, dtype=complex)[None, :]
    y = np.asarray(y, dtype=complex)[None, :]
    if tag == BOUNDARY_TAG:
        for p in (x, y):
            worst = float(np.abs(rho(dom, p)).max())
            if worst > 1e-8:
                raise ValueError(f"boundary metric carrier is bD: |rho|={worst:.2e}")
        return float(pairwise_boundary_dist(dom, x, y)[0, 0])
    return float(pairwise_interior_dist(dom, x, y)[0, 0])


def pairwise_dist(dom: DomainModel, tag: str, X, Y) -> np.ndarray:
    _check_tag(tag)
    if tag == BOUNDARY_TAG:
        return pairwise_boundary_dist(dom, X, Y)
    return pairwise_interior_dist(dom, X, Y)


def dist_to_boundary(dom: DomainModel, z, boundary_grid: Grid) -> float:
    """min over boundary grid nodes of the interior gauge to z."""
    D = pairwise_interior_dist(dom, np.asarray(z, dtype=complex)[None, :],
                               boundary_grid.nodes)
    return float(D.min())


# ---------------------------------------------------------------------------
# balls

def quasi_ball(grid: Grid, tag: str, center, radius: float) -> np.ndarray:
    """Indices of grid nodes within the symmetrized distance radius."""
    _check_tag(tag)
    c = np.asarray(center, dtype=complex)[None, :]
    D = pairwise_dist(grid.domain, tag, c, grid.nodes)[0]
    return np.nonzero(D < radius)[0]


def ball_volume(grid: Grid, tag: str, center, radius: float) -> float:
    """Measure of the quasi-ball: sum of member quadrature weights."""
    idx = quasi_ball(grid, tag, center, radius)
    return float(grid.weights[idx].sum())


# ---------------------------------------------------------------------------
# scaling diagnostics

def near_boundary_probes(dom: DomainModel, n: int, seed: int = 0,
                         pullback: tuple = (2e-4, 4e-3)) -> np.ndarray:
    """Off-grid probe points: random boundary samples pulled inward.

    The radial pullback factors are drawn from the given band, small
    enough that probes sit in the outermost collar where the anisotropic
    scaling is visible, and off every grid node so ball membership counts
    carry no self-cell bias.
    """
    rng = np.random.default_rng(seed)
    W = random_boundary_points(dom, n, rng)
    t = rng.uniform(*pullback, size=n)
    return W * (1.0 - t)[:, None]


def ball_volume_profile(grid: Grid, tag: str, deltas: np.ndarray,
                        n_centers: int = 200, seed: int = 0,
                        center_mask: np.ndarray | None = None,
                        chunk: int = 16,
                        centers: np.ndarray | None = None):
    """Mean quasi-ball measure over sampled centers for each delta.

    Returns (deltas, mean measures).  Centers default to sampled grid
    nodes, optionally restricted by a boolean mask; an explicit coordinate
    array overrides the sampling.  Off-node centers are the right choice
    for interior scaling fits, where a node-aligned center always counts
    its own cell and floors the small-ball measure.
    """
    _check_tag(tag)
    deltas = np.asarray(deltas, dtype=float)
    if centers is None:
        rng = np.random.default_rng(seed)
        pool = np.nonzero(center_mask)[0] if center_mask is not None \
            else np.arange(grid.size)
        take = min(n_centers, len(pool))
        centers = grid.nodes[rng.choice(pool, size=take, replace=False)]
    else:
        centers = np.atleast_2d(np.asarray(centers, dtype=complex))
    acc = np.zeros(len(deltas))
    w = grid.weights
    for lo in range(0, len(centers), chunk):
        D = pairwise_dist(grid.domain, tag, centers[lo:lo + chunk], grid.nodes)
        idx = np.searchsorted(deltas, D, side="left")
        for r in range(D.shape[0]):
            hist = np.bincount(idx[r], weights=w, minlength=len(deltas) + 1)
            acc += np.cumsum(hist)[:len(deltas)]
    return deltas, acc / len(centers)


def fit_log_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x)), np.log(np.asarray(y))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(coef[0])


def volume_slope(grid: Grid, tag: str, delta_lo: float, delta_hi: float,
                 n_deltas: int = 12, n_centers: int = 200, seed: int = 0,
                 center_mask: np.ndarray | None = None,
                 centers: np.ndarray | None = None) -> float:
    """Fitted log-log slope of mean ball measure over [delta_lo, delta_hi]."""
    deltas = np.geomspace(delta_lo, delta_hi, n_deltas)
    _, mus = ball_volume_profile(grid, tag, deltas, n_centers=n_centers,
                                 seed=seed, center_mask=center_mask,
                                 centers=centers)
    if np.any(mus <= 0):
        raise ValueError("empty balls in the requested window; "
                         "raise delta_lo or refine the grid")
    return fit_log_slope(deltas, mus)


@dataclass
class StructureReport:
    """Sampled quasi-metric structure constants on a grid."""

    tag: str
    A0: float             # quasi-triangle constant over sampled triples
    doubling_C: float     # max mu(B(2r)) / mu(B(r)) over sampled balls
    volume_slope: float   # fitted scaling exponent of mu(B(delta))
    window: tuple         # (delta_lo, delta_hi) used for the slope
    samples: int

    def __str__(self):
        return (f"{self.tag}: A0={self.A0:.3f} doubling={self.doubling_C:.2f} "
                f"slope={self.volume_slope:.3f} on {self.window}")


def structure_constants(grid: Grid, tag: str, window: tuple,
                        n_samples: int = 2000, seed: int = 0,
                        center_mask: np.ndarray | None = None) -> StructureReport:
    """Estimate A0, the doubling constant, and the volume scaling slope."""
    _check_tag(tag)
    rng = np.random.default_rng(seed)
    pool = np.nonzero(center_mask)[0] if center_mask is not None \
        else np.arange(grid.size)

    tri = rng.choice(pool, size=(n_samples, 3))
    X, Y, Z = (grid.nodes[tri[:, k]] for k in range(3))
    dom = grid.domain
    dxz = _pair_diag(dom, tag, X, Z)
    dxy = _pair_diag(dom, tag, X, Y)
    dyz = _pair_diag(dom, tag, Y, Z)
    keep = (dxy + dyz) > 0
    A0 = float((dxz[keep] / (dxy + dyz)[keep]).max())

    n_balls = min(60, len(pool))
    centers = rng.choice(pool, size=n_balls, replace=False)
    radii = rng.uniform(window[0], 0.5 * window[1], size=n_balls)
    ratios = []
    for c, r in zip(centers, radii):
        small = ball_volume(grid, tag, grid.nodes[c], r)
        if small <= 0:
            continue
        ratios.append(ball_volume(grid, tag, grid.nodes[c], 2 * r) / small)
    slope = volume_slope(grid, tag, window[0], window[1], seed=seed,
                         center_mask=center_mask)
    return StructureReport(tag=tag, A0=A0, doubling_C=float(np.max(ratios)),
                           volume_slope=slope, window=window,
                           samples=n_samples)


def _pair_diag(dom, tag, X, Y, chunk: int = 512):
    """dist(x_i, y_i) for paired samples, blockwise to bound memory."""
    out = np.empty(len(X))
    for lo in range(0, len(X), chunk):
        sl = slice(lo, lo + chunk)
        out[sl] = np.diagonal(pairwise_dist(dom, tag, X[sl], Y[sl]))
    return out


# ---------------------------------------------------------------------------
# comparison against the Euclidean scale

def comparison_exponents(grid: Grid, n_pairs: int = 4000, seed: int = 0,
                         n_bins: int = 18):
    """Envelope exponents of the boundary metric against Euclidean distance.

    Bins sampled boundary pairs by |x - y|, fits the log-log slope of the
    per-bin minimum and maximum of dist(x, y).  The expected envelope pair
    is (1, 1/2): dist is pinched between |x-y| and |x-y|^(1/2) scales.
    """
    rng = np.random.default_rng(seed)
    i = rng.integers(0, grid.size, size=n_pairs)
    j = rng.integers(0, grid.size, size=n_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    X, Y = grid.nodes[i], grid.nodes[j]
    e = np.sqrt((np.abs(X - Y) ** 2).sum(axis=-1))
    d = _pair_diag(grid.domain, BOUNDARY_TAG, X, Y)
    edges = np.geomspace(e.min() * 1.001, e.max() * 0.999, n_bins + 1)
    mids, lows, highs = [], [], []
    for b in range(n_bins):
        m = (e >= edges[b]) & (e < edges[b + 1])
        if m.sum() < 5:
            continue
        mids.append(np.sqrt(edges[b] * edges[b + 1]))
        lows.append(d[m].min())
        highs.append(d[m].max())
    lower_fit = fit_log_slope(np.array(mids), np.array(lows))
    upper_fit = fit_log_slope(np.array(mids), np.array(highs))
    return {"lower": lower_fit, "upper": upper_fit}


def metric_equivalence_ratio(dom: DomainModel, boundary_grid: Grid,
                             n_pairs: int = 3000, seed: int = 0):
    """min and max of M(x, y) / |g(x, y)| over sampled boundary pairs.

    The interior gauge restricted to bD x bD is two-sided comparable to
    |g|; the returned ratios quantify the constants on this grid.
    """
    rng = np.random.default_rng(seed)
    i = rng.integers(0, boundary_grid.size, size=n_pairs)
    j = rng.integers(0, boundary_grid.size, size=n_pairs)
    keep = i != j
    X, Y = boundary_grid.nodes[i[keep]], boundary_grid.nodes[j[keep]]
    m = _pair_diag(dom, INTERIOR_TAG, X, Y)
    gsz = _pair_diag(dom, BOUNDARY_TAG, X, Y) ** 2
    ratio = m / gsz
    return float(ratio.min()), float(ratio.max())
