"""Quadrature grids and reference measures on model domains.

Boundary grids carry the surface measure and per-node Leray-Levi density;
interior grids carry volume weights concentrated geometrically toward the
boundary.  All weights are exact per-cell masses of the underlying smooth
parametrizations (midpoint in the layered directions, uniform in the
periodic ones), so analytic totals are reproduced at the quadrature order.

Normalization note: `leray_levi_density` returns the reference constant
(n-1)! (4 pi)^{-n} |det rho_T| |grad rho|, pinned to 1/(2 pi) on the unit
circle and 1/(8 pi^2) on the unit sphere in C^2.  The kernel calculus of the
operator modules uses the geometric pullback of the boundary form, which is
4^{n-1} times this reference value; the factor is exposed here as
`leray_form_factor` so both conventions stay consistent in one place.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .domain_geometry import (
    DomainModel,
    boundary_radius,
    curve_jet,
    d_rho,
    hess_mixed,
    rho,
)

GEOMETRIC_RATIO = 1.35  # radial layer thickness ratio for interior grids


# ---------------------------------------------------------------------------
# grid container

@dataclass
class Grid:
    """Quadrature grid on the boundary or the interior of a model domain.

    kind:       "boundary" or "interior"
    nodes:      (N, n) complex node coordinates
    weights:    (N,) positive quadrature weights for the surface measure
                (boundary) or Lebesgue volume (interior)
    leray_levi: (N,) reference Leray-Levi density at the nodes, boundary only
    resolution: descriptor of the parametric resolution
    separation: minimal Euclidean distance between parameter-adjacent nodes
    params:     parametric payload (angles, jets, layer data) for modules
                that need the parametrization, not just the point cloud
    """

    kind: str
    domain: DomainModel
    nodes: np.ndarray
    weights: np.ndarray
    leray_levi: np.ndarray | None
    resolution: dict
    separation: float
    params: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("boundary", "interior"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if np.any(self.weights <= 0):
            raise ValueError("grid weights must be positive")
        r = np.asarray(rho(self.domain, self.nodes))
        if self.kind == "boundary":
            worst = float(np.abs(r).max())
            if worst > 1e-10:
                raise ValueError(f"boundary node off bD: |rho| = {worst:.3e}")
            if self.leray_levi is None or np.any(self.leray_levi <= 0):
                raise ValueError("boundary grids need positive leray_levi")
        else:
            if float(r.max()) >= 0.0:
                raise ValueError("interior node with rho >= 0")

    @property
    def size(self) -> int:
        return self.nodes.shape[0]


# ---------------------------------------------------------------------------
# Leray-Levi density

def leray_form_factor(n: int) -> float:
    """Ratio (geometric form pullback) / (reference density) = 4^(n-1)."""
    return 4.0 ** (n - 1)


def tangential_hessian_det(dom: DomainModel, W: np.ndarray) -> np.ndarray:
    """det of the mixed Hessian restricted to the complex tangent space.

    For n=1 the tangential space is trivial and the det is 1.  For n=2 it
    equals tr(H) - <H grad, grad>/|grad|^2 with H the mixed Hessian.
    """
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    if dom.n == 1:
        return np.ones(W.shape[0])
    H = hess_mixed(dom, W)                     # (N, n, n), Hermitian
    grad = d_rho(dom, W)                       # (N, n)
    tr = np.einsum("...jj->...", H).real
    Hg = np.einsum("...jk,...k->...j", H, grad)
    num = np.einsum("...j,...j->...", np.conj(grad), Hg).real
    nrm2 = (grad.real ** 2 + grad.imag ** 2).sum(axis=-1)
    return tr - num / nrm2


def leray_levi_density(dom: DomainModel, W: np.ndarray) -> np.ndarray:
    """Reference Leray-Levi density (n-1)! (4 pi)^{-n} |det rho_T| |grad rho|.

    |grad rho| is the real gradient length, i.e. 2 ||d rho||.  Unit circle:
    exactly 1/(2 pi).  Unit sphere in C^2: 1/(8 pi^2).
    """
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    grad = d_rho(dom, W)
    norm = 2.0 * np.sqrt((grad.real ** 2 + grad.imag ** 2).sum(axis=-1))
    det_t = tangential_hessian_det(dom, W)
    fact = float(math.factorial(dom.n - 1))
    return (fact / (4.0 * np.pi) ** dom.n) * det_t * norm


# ---------------------------------------------------------------------------
# boundary grids

def _sphere_parameter_grid(n_u: int, n_xi: int):
    """Midpoint grid in u = sin^2(eta) times uniform angles; cell volume
    du dxi1 dxi2 with the reference measure (1/2) du dxi1 dxi2 on S^3."""
    u = (np.arange(n_u) + 0.5) / n_u
    xi1 = 2.0 * np.pi * np.arange(n_xi) / n_xi
    xi2 = 2.0 * np.pi * np.arange(n_xi) / n_xi
    U, X1, X2 = np.meshgrid(u, xi1, xi2, indexing="ij")
    return U.ravel(), X1.ravel(), X2.ravel(), (1.0 / n_u) * (2.0 * np.pi / n_xi) ** 2


def _sphere_directions(U, X1, X2):
    cu = np.sqrt(1.0 - U)
    su = np.sqrt(U)
    return np.stack([cu * np.exp(1j * X1), su * np.exp(1j * X2)], axis=-1)


def _direction_tangents(U, X1, X2):
    """d omega / d(u, xi1, xi2) for the Hopf parametrization, (N, 3, 2)."""
    cu = np.sqrt(1.0 - U)
    su = np.sqrt(U)
    e1 = np.exp(1j * X1)
    e2 = np.exp(1j * X2)
    zero = np.zeros_like(e1)
    d_u = np.stack([-e1 / (2.0 * cu), e2 / (2.0 * su)], axis=-1)
    d_x1 = np.stack([1j * cu * e1, zero], axis=-1)
    d_x2 = np.stack([zero, 1j * su * e2], axis=-1)
    return np.stack([d_u, d_x1, d_x2], axis=1)


def _radius_derivative(dom: DomainModel, omega, R, d_omega):
    """dR along a direction tangent via implicit differentiation of
    F = R^2 s(omega) - 1 + amp R^m Re(omega_1^m)."""
    a = np.asarray(dom.axes)
    s = (a * (omega.real ** 2 + omega.imag ** 2)).sum(axis=-1)
    ds = 2.0 * (a * (np.conj(omega) * d_omega).real).sum(axis=-1)
    F_R = 2.0 * R * s
    dF = R * R * ds
    if dom.kind == "perturbed_ball" and dom.amplitude != 0.0:
        m = dom.frequency
        t = (omega[..., 0] ** m).real
        dt = m * (omega[..., 0] ** (m - 1) * d_omega[..., 0]).real
        F_R = F_R + dom.amplitude * m * R ** (m - 1) * t
        dF = dF + dom.amplitude * R ** m * dt
    return -dF / F_R


def _surface_jacobian(dom: DomainModel, U, X1, X2):
    """Area Jacobian of p = (u, xi1, xi2) -> R(omega(p)) omega(p), plus the
    nodes themselves.  Returns (nodes, J) with J the 3d Gram-det root."""
    omega = _sphere_directions(U, X1, X2)
    R = boundary_radius(dom, omega)
    tang = _direction_tangents(U, X1, X2)            # (N, 3, 2)
    T = np.empty_like(tang)
    for aix in range(3):
        dR = _radius_derivative(dom, omega, R, tang[:, aix, :])
        T[:, aix, :] = dR[:, None] * omega + R[:, None] * tang[:, aix, :]
    gram = np.einsum("nak,nbk->nab", T, np.conj(T)).real
    det = (gram[:, 0, 0] * (gram[:, 1, 1] * gram[:, 2, 2] - gram[:, 1, 2] ** 2)
           - gram[:, 0, 1] * (gram[:, 0, 1] * gram[:, 2, 2]
                              - gram[:, 1, 2] * gram[:, 0, 2])
           + gram[:, 0, 2] * (gram[:, 0, 1] * gram[:, 1, 2]
                              - gram[:, 1, 1] * gram[:, 0, 2]))
    nodes = R[:, None] * omega
    return nodes, np.sqrt(det)


def surface_frame(dom: DomainModel, grid: "Grid") -> np.ndarray:
    """Parameterization tangents at each n=2 boundary node, (N, 3, 2).

    Row a holds d(R omega)/d p_a for p = (u, xi1, xi2); the surface
    Jacobian stored on the grid is the Gram-det root of these vectors.
    """
    U, X1, X2 = grid.params["U"], grid.params["X1"], grid.params["X2"]
    omega = _sphere_directions(U, X1, X2)
    R = boundary_radius(dom, omega)
    tang = _direction_tangents(U, X1, X2)
    T = np.empty_like(tang)
    for aix in range(3):
        dR = _radius_derivative(dom, omega, R, tang[:, aix, :])
        T[:, aix, :] = dR[:, None] * omega + R[:, None] * tang[:, aix, :]
    return T


def _adjacent_separation(nodes: np.ndarray, shape) -> float:
    """Min distance over parameter-adjacent node pairs (wrap in each axis)."""
    pts = nodes.reshape(shape + (nodes.shape[-1],))
    best = np.inf
    for axis in range(len(shape)):
        d = pts - np.roll(pts, 1, axis=axis)
        dist = np.sqrt((d.real ** 2 + d.imag ** 2).sum(axis=-1))
        if shape[axis] == 1:
            continue
        if axis == 0 and len(shape) == 3:
            # u direction does not wrap; drop the seam row
            dist = dist[1:]
        best = min(best, float(dist.min()))
    return best


def build_boundary_grid(dom: DomainModel, N_per_dim: int) -> Grid:
    """Boundary quadrature grid.

    n=1: N equispaced parameter nodes, trapezoid arclength weights (exact
    cell masses for the periodic smooth curve).
    n=2: product grid, midpoints in u = sin^2(eta) by uniform Hopf angles
    (N_per_dim // 4 by N_per_dim by N_per_dim), weights from the analytic
    area Jacobian of the radial pushforward.
    """
    if dom.n == 1:
        N = int(N_per_dim)
        theta = 2.0 * np.pi * np.arange(N) / N
        jet = curve_jet(dom, theta)
        h = 2.0 * np.pi / N
        weights = h * jet.speed
        lam = leray_levi_density(dom, jet.w)
        sep = float(np.abs(jet.w[:, 0] - np.roll(jet.w[:, 0], 1)).min())
        return Grid(kind="boundary", domain=dom, nodes=jet.w, weights=weights,
                    leray_levi=lam, resolution={"N": N, "h": h},
                    separation=sep, params={"jet": jet})
    n_u = max(2, int(N_per_dim) // 4)
    n_xi = int(N_per_dim)
    U, X1, X2, cell = _sphere_parameter_grid(n_u, n_xi)
    nodes, J = _surface_jacobian(dom, U, X1, X2)
    weights = J * cell
    lam = leray_levi_density(dom, nodes)
    sep = _adjacent_separation(nodes, (n_u, n_xi, n_xi))
    return Grid(kind="boundary", domain=dom, nodes=nodes, weights=weights,
                leray_levi=lam,
                resolution={"n_u": n_u, "n_xi": n_xi, "cell": cell},
                separation=sep,
                params={"U": U, "X1": X1, "X2": X2, "jacobian": J})


# ---------------------------------------------------------------------------
# interior grids

def _geometric_layers(n_radial: int, ratio: float = GEOMETRIC_RATIO):
    """Radial layer boundaries in s in [0, 1], thickness decreasing
    geometrically toward s = 1 by the fixed ratio."""
    thick = ratio ** -np.arange(n_radial)
    thick /= thick.sum()
    edges = np.concatenate([[0.0], np.cumsum(thick)])
    edges[-1] = 1.0
    return edges, thick


def build_interior_grid(dom: DomainModel, N_angular: int, N_radial: int) -> Grid:
    """Interior grid: boundary-shaped angular layers scaled inward.

    Radial spacing is geometric (fixed ratio 1.35) so the outermost layers
    resolve the near-boundary region; the innermost/outermost thickness
    ratio is >= 10 once N_radial >= 16.  Weights are exact per-cell volumes
    of dV = s^(2n-1) R(omega)^(2n) ds dsigma(omega) with midpoint angular
    cells.
    """
    edges, _ = _geometric_layers(int(N_radial))
    two_n = 2 * dom.n
    rad_mass = (edges[1:] ** two_n - edges[:-1] ** two_n) / two_n   # (R,)
    s_mid = 0.5 * (edges[1:] + edges[:-1])

    if dom.n == 1:
        N = int(N_angular)
        theta = 2.0 * np.pi * (np.arange(N) + 0.5) / N
        h = 2.0 * np.pi / N
        r_omega = boundary_radius(dom, np.exp(1j * theta)[:, None])
        ang_nodes = np.exp(1j * theta)[:, None]
        ang_mass = r_omega ** two_n * h                              # (N,)
        shape = (N,)
    else:
        n_u = max(2, int(N_angular) // 4)
        n_xi = int(N_angular)
        U, X1, X2, cell = _sphere_parameter_grid(n_u, n_xi)
        omega = _sphere_directions(U, X1, X2)
        r_omega = boundary_radius(dom, omega)
        ang_nodes = omega
        ang_mass = r_omega ** two_n * 0.5 * cell
        shape = (n_u, n_xi, n_xi)

    scaled = s_mid[:, None] * r_omega[None, :]                       # (R, A)
    nodes = (scaled[..., None] * ang_nodes[None, :, :]).reshape(-1, dom.n)
    weights = (rad_mass[:, None] * ang_mass[None, :]).ravel()
    depth = (1.0 - s_mid)[:, None] * np.broadcast_to(r_omega, scaled.shape)

    adj = np.abs(scaled[:, 0] - np.roll(scaled[:, 0], 1))[1:]
    ang_sep = _adjacent_separation(ang_nodes * r_omega[:, None], shape)
    sep = min(float(adj.min()), float(ang_sep) * float(s_mid[0]))
    return Grid(kind="interior", domain=dom, nodes=nodes, weights=weights,
                leray_levi=None,
                resolution={"N_angular": int(N_angular),
                            "N_radial": int(N_radial),
                            "ratio": GEOMETRIC_RATIO,
                            "thickness_ratio": float(
                                (edges[1] - edges[0]) / (edges[-1] - edges[-2]))},
                separation=sep,
                params={"edges": edges, "s_mid": s_mid,
                        "r_omega": r_omega, "layer_count": len(s_mid),
                        "depth": depth.ravel(),
                        "layer_index": np.repeat(np.arange(len(s_mid)),
                                                 r_omega.size)})


# ---------------------------------------------------------------------------
# integration and annuli

def integrate(grid: Grid, f, measure: str = "lebesgue", weight=None) -> complex:
    """Integral of f over the grid against the requested measure.

    measure: "lebesgue" (surface/volume weights), "leray" (reference
    Leray-Levi density, boundary grids only), "weighted" (lebesgue times
    the supplied weight values).
    """
    vals = f(grid.nodes) if callable(f) else np.asarray(f)
    if measure == "lebesgue":
        return complex((vals * grid.weights).sum())
    if measure == "leray":
        if grid.kind != "boundary":
            raise ValueError("Leray-Levi measure lives on boundary grids")
        return complex((vals * grid.leray_levi * grid.weights).sum())
    if measure == "weighted":
        if weight is None:
            raise ValueError("weighted integration needs weight values")
        wv = weight(grid.nodes) if callable(weight) else np.asarray(weight)
        return complex((vals * wv * grid.weights).sum())
    raise ValueError(f"unknown measure {measure!r}")


def dyadic_annuli(grid: Grid, center: np.ndarray, delta: float,
                  n_shells: int, dist=None) -> list[np.ndarray]:
    """Index sets of the dyadic annuli 2^-(i+1) delta <= d < 2^-i delta.

    dist: callable mapping the node array to distances from the center;
    Euclidean by default.
    """
    center = np.asarray(center, dtype=complex)
    if dist is None:
        d = np.sqrt((np.abs(grid.nodes - center[None, :]) ** 2).sum(axis=-1))
    else:
        d = np.asarray(dist(grid.nodes))
    shells = []
    for i in range(n_shells):
        hi = delta * 2.0 ** (-i)
        lo = delta * 2.0 ** (-(i + 1))
        shells.append(np.nonzero((d >= lo) & (d < hi))[0])
    return shells


# ---------------------------------------------------------------------------
# serialization

def save_grid(grid: Grid, path: str) -> None:
    """Plain-text grid dump: '#'-headers, then one node per line with
    columns Re/Im per coordinate, weight, and (boundary) leray density."""
    with open(path, "w") as fh:
        fh.write(f"# kind {grid.kind}\n")
        fh.write(f"# domain {grid.domain.label()}\n")
        fh.write(f"# resolution {json.dumps(grid.resolution)}\n")
        fh.write(f"# separation {grid.separation!r}\n")
        for i in range(grid.size):
            cols = []
            for j in range(grid.domain.n):
                cols += [repr(float(grid.nodes[i, j].real)),
                         repr(float(grid.nodes[i, j].imag))]
            cols.append(repr(float(grid.weights[i])))
            if grid.leray_levi is not None:
                cols.append(repr(float(grid.leray_levi[i])))
            fh.write(" ".join(cols) + "\n")


def load_grid(path: str, dom: DomainModel) -> Grid:
    """Inverse of save_grid (parametric payload is not round-tripped)."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(" ")
                header[key] = val
            elif line.strip():
                rows.append([float(tok) for tok in line.split()])
    data = np.asarray(rows)
    n = dom.n
    nodes = data[:, 0:2 * n:2] + 1j * data[:, 1:2 * n:2]
    weights = data[:, 2 * n]
    kind = header["kind"]
    lam = data[:, 2 * n + 1] if kind == "boundary" else None
    return Grid(kind=kind, domain=dom, nodes=nodes, weights=weights,
                leray_levi=lam, resolution=json.loads(header["resolution"]),
                separation=float(header["separation"]))
