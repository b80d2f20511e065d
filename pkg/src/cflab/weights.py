"""Weight families and their Muckenhoupt/Bekolle constants on grids.

A Weight is a cached positive density on the nodes of a Grid.  Constants
are estimated as suprema over a sampled ball family: centers at every
node (boundary mode) or every node of the tubular collar (interior mode),
radii on a dyadic ladder from twice the node separation up to the
diameter, measured in the matching quasi-metric.  Adding balls can only
increase the estimate, so every reported value is a certified lower
bound of the true constant; growth under refinement is the operational
signal that a weight sits outside the class.

Interior power weights use -rho as the closed-form realization of the
distance to the boundary (the two are comparable within a factor of
sup|d rho| on the models here).  In interior mode the family keeps only
balls with radius exceeding the center's boundary distance, which is the
admissibility constraint of the Bekolle-Bonami class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d

from .domain_geometry import boundary_radius, rho
from .measures_quadrature import Grid
from .quasi_metric import (BOUNDARY_TAG, INTERIOR_TAG, TUBE_RHO0, _pair_diag,
                           pairwise_dist)

BOUNDARY_MODE = "boundary"
INTERIOR_BP_MODE = "interior_bp"

_CHUNK = 512


# ---------------------------------------------------------------------------
# weight families

@dataclass(frozen=True)
class Weight:
    """Positive per-node density cached on a grid."""

    family: str
    params: dict
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError(f"{self.family}: non-positive or non-finite "
                             "weight values detected")
        object.__setattr__(self, "values", v)


def midpoint_base_point(grid: Grid, index: int = 0) -> np.ndarray:
    """Boundary point at the parameter midpoint next to a node.

    Power-weight base points are snapped here so they land strictly
    between grid nodes and the cached values stay finite.
    """
    if grid.kind != "boundary":
        raise ValueError("base points live on boundary grids")
    dom = grid.domain
    if dom.n == 1:
        h = grid.resolution["h"]
        th = 2 * np.pi * index / grid.resolution["N"] + 0.5 * h
        om = np.array([[np.exp(1j * th)]])
    else:
        n_u, n_xi = grid.resolution["n_u"], grid.resolution["n_xi"]
        u = grid.params["U"][index] + 0.5 / n_u
        x1 = grid.params["X1"][index] + np.pi / n_xi
        x2 = grid.params["X2"][index] + np.pi / n_xi
        s = np.sqrt(1.0 - u)
        om = np.array([[s * np.exp(1j * x1), np.sqrt(u) * np.exp(1j * x2)]])
    R = boundary_radius(dom, om)
    return (R[:, None] * om)[0]


def constant_weight(grid: Grid, c: float = 1.0) -> Weight:
    return Weight("constant", {"c": float(c)},
                  np.full(grid.size, float(c)))


def boundary_power_weight(grid: Grid, zeta0, t: float) -> Weight:
    """sigma(w) = dist(w, zeta0)^t under the boundary quasi-metric."""
    if grid.kind != "boundary":
        raise ValueError("boundary power weights need a boundary grid")
    z0 = np.asarray(zeta0, dtype=complex).reshape(1, -1)
    d = pairwise_dist(grid.domain, BOUNDARY_TAG, z0, grid.nodes)[0]
    return Weight("boundary_power",
                  {"zeta0": z0[0], "t": float(t)}, d ** t)


def interior_power_weight(grid: Grid, t: float) -> Weight:
    """sigma(z) = dist(z, bD)^t realized through the defining function."""
    if grid.kind != "interior":
        raise ValueError("interior power weights need an interior grid")
    return Weight("interior_power", {"t": float(t)},
                  (-rho(grid.domain, grid.nodes)) ** t)


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (x * (6.0 * x - 15.0) + 10.0)


def mollified_jump_weight(grid: Grid, center, radius: float, ratio: float,
                          width: float = 0.3) -> Weight:
    """ratio inside the metric ball, 1 outside, quintic collar between."""
    tag = BOUNDARY_TAG if grid.kind == "boundary" else INTERIOR_TAG
    c = np.asarray(center, dtype=complex).reshape(1, -1)
    d = pairwise_dist(grid.domain, tag, c, grid.nodes)[0]
    blend = _smoothstep((radius - d) / (width * radius))
    return Weight("mollified_jump",
                  {"center": c[0], "radius": float(radius),
                   "ratio": float(ratio), "width": float(width)},
                  1.0 + (float(ratio) - 1.0) * blend)


def dual_weight(sigma: Weight, p: float) -> Weight:
    """sigma^(-1/(p-1)), the dual density entering the A_p display."""
    return Weight(f"dual({sigma.family})", {"p": float(p), **sigma.params},
                  sigma.values ** (-1.0 / (p - 1.0)))


def make_weight(spec: dict, grid: Grid) -> Weight:
    """Build a weight from a plain config mapping (family + parameters)."""
    fam = spec["family"]
    if fam == "constant":
        return constant_weight(grid, spec.get("c", 1.0))
    if fam == "boundary_power":
        zeta0 = spec.get("zeta0")
        if zeta0 is None:
            zeta0 = midpoint_base_point(grid)
        return boundary_power_weight(grid, zeta0, spec["t"])
    if fam == "interior_power":
        return interior_power_weight(grid, spec["t"])
    if fam == "mollified_jump":
        return mollified_jump_weight(grid, spec["center"], spec["radius"],
                                     spec["ratio"],
                                     spec.get("width", 0.3))
    raise ValueError(f"unknown weight family {fam!r}")


# ---------------------------------------------------------------------------
# ball families

@dataclass(frozen=True)
class BallFamily:
    """Sampled (center node, dyadic radius) family for one metric tag."""

    mode: str
    tag: str
    center_indices: np.ndarray
    radii: np.ndarray
    admissible: np.ndarray     # (centers, radii) Bekolle filter mask

    @property
    def size(self) -> int:
        return int(self.admissible.sum())


def _tag_separation(grid: Grid, tag: str) -> float:
    idx = np.arange(grid.size)
    d = _pair_diag(grid.domain, tag, grid.nodes[idx],
                   grid.nodes[np.roll(idx, -1)])
    return float(d.min())


def _tag_diameter(grid: Grid, tag: str) -> float:
    probes = grid.nodes[:: max(1, grid.size // 8)][:8]
    best = 0.0
    for p in probes:
        D = pairwise_dist(grid.domain, tag, p[None, :], grid.nodes)
        best = max(best, float(D.max()))
    return best


def build_ball_family(grid: Grid, mode: str) -> BallFamily:
    if mode == BOUNDARY_MODE:
        if grid.kind != "boundary":
            raise ValueError("boundary mode needs a boundary grid")
        tag = BOUNDARY_TAG
        centers = np.arange(grid.size)
    elif mode == INTERIOR_BP_MODE:
        if grid.kind != "interior":
            raise ValueError("interior mode needs an interior grid")
        tag = INTERIOR_TAG
        centers = np.nonzero(-rho(grid.domain, grid.nodes) < TUBE_RHO0)[0]
        if len(centers) == 0:
            raise ValueError("no nodes in the tubular collar")
    else:
        raise ValueError(f"unknown ball family mode {mode!r}")

    r0 = 2.0 * _tag_separation(grid, tag)
    diam = _tag_diameter(grid, tag)
    n_r = max(1, int(np.ceil(np.log2(diam / r0))) + 1)
    radii = r0 * 2.0 ** np.arange(n_r)

    if mode == BOUNDARY_MODE:
        adm = np.ones((len(centers), n_r), dtype=bool)
    else:
        depth = grid.params.get("depth")
        bdist = depth[centers] if depth is not None \
            else -rho(grid.domain, grid.nodes[centers])
        adm = radii[None, :] > bdist[:, None]
    return BallFamily(mode=mode, tag=tag, center_indices=centers,
                      radii=radii, admissible=adm)


def _is_plain_circle(grid: Grid) -> bool:
    return (grid.kind == "boundary" and grid.domain.n == 1
            and grid.domain.kind == "ball")


def _circle_halfwidths(grid: Grid, radii: np.ndarray) -> np.ndarray:
    # metric ball of radius r at a circle node is the arc of chord < r^2
    N = grid.size
    ks = np.empty(len(radii), dtype=int)
    for i, r in enumerate(radii):
        half_chord = 0.5 * r * r
        if half_chord >= 1.0:
            ks[i] = N // 2
        else:
            ks[i] = int(np.ceil(N * np.arcsin(half_chord) / np.pi)) - 1
    return np.clip(ks, 0, N // 2)


def _family_ball_averages(grid: Grid, fam: BallFamily,
                          cols: list) -> np.ndarray:
    """Weighted ball averages, shape (centers, radii, columns)."""
    w = grid.weights
    stack = np.column_stack([np.asarray(c, dtype=float) * w for c in cols]
                            + [w])
    C, R = len(fam.center_indices), len(fam.radii)
    sums = np.empty((C, R, stack.shape[1]))
    if _is_plain_circle(grid):
        ks = _circle_halfwidths(grid, fam.radii)
        pref = np.vstack([np.zeros(stack.shape[1]),
                          np.cumsum(np.tile(stack, (2, 1)), axis=0)])
        N = grid.size
        c = fam.center_indices
        for j, k in enumerate(ks):
            L = min(2 * int(k) + 1, N)
            start = (c - int(k)) % N
            sums[:, j, :] = pref[start + L] - pref[start]
    else:
        for lo in range(0, C, _CHUNK):
            sel = fam.center_indices[lo:lo + _CHUNK]
            D = pairwise_dist(grid.domain, fam.tag, grid.nodes[sel],
                              grid.nodes)
            for j, r in enumerate(fam.radii):
                sums[lo:lo + len(sel), j, :] = (D < r).astype(float) @ stack
    return sums[:, :, :-1] / sums[:, :, -1:]


# ---------------------------------------------------------------------------
# maximal function and class constants

def maximal_function(grid: Grid, f, mode: str,
                     family: BallFamily | None = None) -> np.ndarray:
    """Largest admissible-ball average of f over balls containing each node.

    A monotone lower bound of the Hardy-Littlewood maximal function; in
    interior mode only Bekolle-admissible balls (radius exceeding the
    center's boundary distance) enter the supremum.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("maximal function expects f >= 0")
    fam = family or build_ball_family(grid, mode)
    avg = _family_ball_averages(grid, fam, [f])[:, :, 0]
    out = np.full(grid.size, -np.inf)
    if _is_plain_circle(grid) and mode == BOUNDARY_MODE:
        ks = _circle_halfwidths(grid, fam.radii)
        for j, k in enumerate(ks):
            size = min(2 * int(k) + 1, grid.size)
            out = np.maximum(out, maximum_filter1d(avg[:, j], size=size,
                                                   mode="wrap"))
        return out
    for lo in range(0, len(fam.center_indices), _CHUNK):
        sel = fam.center_indices[lo:lo + _CHUNK]
        D = pairwise_dist(grid.domain, fam.tag, grid.nodes[sel], grid.nodes)
        for j, r in enumerate(fam.radii):
            ok = fam.admissible[lo:lo + len(sel), j]
            if not ok.any():
                continue
            cand = np.where((D < r) & ok[:, None],
                            avg[lo:lo + len(sel), j][:, None], -np.inf)
            out = np.maximum(out, cand.max(axis=0))
    if np.any(~np.isfinite(out)):
        raise ValueError("empty admissible ball family at some node")
    return out


@dataclass(frozen=True)
class ApReport:
    """Supremum estimate of the weight-class display over a ball family."""

    value: float
    p: float
    mode: str
    center_index: int
    radius: float
    family_size: int

    def __float__(self):
        return self.value

    def __str__(self):
        return (f"[sigma]_{self.p:g} ({self.mode}) >= {self.value:.6g} "
                f"at ball(center={self.center_index}, r={self.radius:.3g})")


def muckenhoupt_constant(grid: Grid, sigma: Weight, p: float, mode: str,
                         family: BallFamily | None = None) -> ApReport:
    """Lower bound for [sigma]_p: sup of (avg sigma)(avg sigma^(-1/(p-1)))^(p-1).

    The supremum runs over the sampled ball family, Bekolle-filtered in
    interior mode, and reports the maximizing ball.
    """
    if not 1.0 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    fam = family or build_ball_family(grid, mode)
    avg = _family_ball_averages(grid, fam,
                                [sigma.values,
                                 sigma.values ** (-1.0 / (p - 1.0))])
    val = avg[:, :, 0] * avg[:, :, 1] ** (p - 1.0)
    val = np.where(fam.admissible, val, -np.inf)
    if not np.isfinite(val).any():
        raise ValueError("degenerate ball family: nothing admissible")
    flat = int(np.argmax(val))
    ci, rj = np.unravel_index(flat, val.shape)
    return ApReport(value=float(val[ci, rj]), p=float(p), mode=mode,
                    center_index=int(fam.center_indices[ci]),
                    radius=float(fam.radii[rj]), family_size=fam.size)


def a1_b1_ratio(grid: Grid, sigma: Weight, mode: str,
                family: BallFamily | None = None) -> float:
    """sup over nodes of M(sigma)/sigma, the A_1/B_1 display."""
    M = maximal_function(grid, sigma.values, mode, family=family)
    return float((M / sigma.values).max())


def weighted_norm(grid: Grid, f, sigma: Weight, p: float) -> float:
    """(sum |f|^p sigma w)^(1/p) over the grid quadrature."""
    if p < 1:
        raise ValueError("p must be >= 1")
    f = np.abs(np.asarray(f)) ** p
    return float((f * sigma.values * grid.weights).sum() ** (1.0 / p))


def leray_ratio_bound(grid: Grid) -> float:
    """max/min of the Leray-Levi density on the grid.

    Class constants here are measured against the induced surface
    measure; this ratio bounds the change when measuring against the
    Leray-Levi measure instead, since the two densities are comparable.
    """
    if grid.kind != "boundary":
        raise ValueError("the density ratio lives on boundary grids")
    return float(grid.leray_levi.max() / grid.leray_levi.min())
