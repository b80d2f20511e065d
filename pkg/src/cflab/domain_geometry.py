"""Model strongly pseudoconvex domains and their defining-function calculus.

Every domain here is given by a global defining function rho on C^n
(n = 1 or 2), with D = {rho < 0} and bD = {rho = 0}:

    ball            rho(z) = sum_j |z_j|^2 - 1
    ellipsoid       rho(z) = sum_j a_j |z_j|^2 - 1,          a_j > 0
    perturbed_ball  rho(z) = sum_j |z_j|^2 - 1 + amp * Re(z_1^m)

Derivatives are Wirtinger derivatives: rho_j = d rho / d z_j, the
holomorphic Hessian rho_jk = d^2 rho / dz_j dz_k, and the mixed (Levi)
Hessian rho_jk~ = d^2 rho / dz_j dz~_k.  The perturbation Re(z_1^m) is
pluriharmonic, so the mixed Hessian of every model is the constant
diag(a); strong pseudoconvexity is uniform and the third-order tensors
d^3 rho / dz dz dz~ vanish identically.

The Levi polynomial at base point w,

    P_w(z) = sum_j rho_j(w)(z_j - w_j)
             + 1/2 sum_{j,k} rho_jk(w)(z_j - w_j)(z_k - w_k),

drives two denominator functions ("g" below): a boundary one used for
Szego-type kernels and an interior one used for Bergman-type kernels.
Both are glued to |w - z|^2 far from the diagonal by a radial cutoff
chi(|w - z|) so that Re g stays coercive; on the ball and on Hermitian
ellipsoids no gluing is necessary (chi == 1 works globally) and g has
the closed form 1 - <z, w>_a.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "DomainModel",
    "DefiningJet",
    "GeneratingForm",
    "SpecialFrame",
    "CoercivityReport",
    "unit_ball",
    "ellipsoid",
    "perturbed_ball",
    "eval_defining",
    "rho",
    "d_rho",
    "hess_hol",
    "hess_mixed",
    "chi",
    "chi_prime",
    "levi_polynomial",
    "levi_form",
    "g_boundary",
    "g_interior",
    "pairwise_g_boundary",
    "pairwise_g_interior",
    "generating_form",
    "special_coordinates",
    "verify_coercivity",
    "boundary_radius",
    "random_boundary_points",
    "curve_jet",
]


@dataclass(frozen=True)
class DomainModel:
    """A model domain: kind, dimension, axes, perturbation, cutoff."""

    n: int
    kind: str                      # "ball" | "ellipsoid" | "perturbed_ball"
    axes: tuple                    # Hermitian coefficients a_j
    amplitude: float = 0.0
    frequency: int = 0
    cutoff_c: float = 1.0
    chi_mode: str = "global"       # "global" | "smoothstep"

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"only n=1,2 supported, got n={self.n}")
        if self.kind not in ("ball", "ellipsoid", "perturbed_ball"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if len(self.axes) != self.n or any(a <= 0 for a in self.axes):
            raise ValueError("axes must be n positive reals")
        if self.chi_mode not in ("global", "smoothstep"):
            raise ValueError(f"unknown chi_mode {self.chi_mode!r}")
        if self.chi_mode == "smoothstep" and self.cutoff_c <= 0:
            raise ValueError("smoothstep cutoff_c must be positive")

    def label(self) -> str:
        if self.kind == "ball":
            return f"ball(n={self.n})"
        if self.kind == "ellipsoid":
            return f"ellipsoid(a={tuple(float(a) for a in self.axes)})"
        return (f"perturbed_ball(n={self.n}, amp={self.amplitude}, "
                f"m={self.frequency}, c={self.cutoff_c})")


def unit_ball(n: int) -> DomainModel:
    return DomainModel(n=n, kind="ball", axes=(1.0,) * n)


def ellipsoid(axes) -> DomainModel:
    axes = tuple(float(a) for a in axes)
    return DomainModel(n=len(axes), kind="ellipsoid", axes=axes)


def perturbed_ball(n: int, amplitude: float = 0.15, frequency: int = 3,
                   cutoff_c: float = 0.9) -> DomainModel:
    """Ball with a pluriharmonic bump amp*Re(z_1^m); uses a smoothstep cutoff.

    amp*m must stay below 2/3 or so to keep the gradient nonvanishing on
    the boundary; the constructor enforces a conservative bound.
    """
    if frequency < 2:
        raise ValueError("frequency must be >= 2 (need a genuine Hessian)")
    if abs(amplitude) * frequency >= 0.8:
        raise ValueError("amplitude*frequency too large: boundary may degenerate")
    return DomainModel(n=n, kind="perturbed_ball", axes=(1.0,) * n,
                       amplitude=float(amplitude), frequency=int(frequency),
                       cutoff_c=float(cutoff_c), chi_mode="smoothstep")


# ---------------------------------------------------------------------------
# defining-function jets (all vectorized over leading axes of Z)

def rho(dom: DomainModel, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z)
    a = np.asarray(dom.axes)
    val = (a * (Z.real ** 2 + Z.imag ** 2)).sum(axis=-1) - 1.0
    if dom.kind == "perturbed_ball" and dom.amplitude != 0.0:
        val = val + dom.amplitude * (Z[..., 0] ** dom.frequency).real
    return val


def d_rho(dom: DomainModel, Z: np.ndarray) -> np.ndarray:
    """Holomorphic gradient (d rho / d z_j); conjugate for the (0,1) part."""
    Z = np.asarray(Z)
    a = np.asarray(dom.axes)
    grad = a * np.conj(Z)
    if dom.kind == "perturbed_ball" and dom.amplitude != 0.0:
        m = dom.frequency
        grad = grad.copy()
        grad[..., 0] += 0.5 * dom.amplitude * m * Z[..., 0] ** (m - 1)
    return grad


def hess_hol(dom: DomainModel, Z: np.ndarray) -> np.ndarray:
    """Holomorphic Hessian rho_jk; zero except for the perturbation."""
    Z = np.asarray(Z)
    H = np.zeros(Z.shape + (dom.n,), dtype=complex)
    if dom.kind == "perturbed_ball" and dom.amplitude != 0.0:
        m = dom.frequency
        H[..., 0, 0] = 0.5 * dom.amplitude * m * (m - 1) * Z[..., 0] ** (m - 2)
    return H


def hess_mixed(dom: DomainModel, Z: np.ndarray) -> np.ndarray:
    """Mixed Hessian rho_jk~ = diag(axes) for every model (pluriharmonic bump)."""
    Z = np.asarray(Z)
    H = np.zeros(Z.shape + (dom.n,), dtype=complex)
    for j, a in enumerate(dom.axes):
        H[..., j, j] = a
    return H


@dataclass
class DefiningJet:
    rho: float
    grad: np.ndarray        # (n,) d rho / dz_j
    hess_hol: np.ndarray    # (n,n) rho_jk
    hess_mixed: np.ndarray  # (n,n) rho_jk~


def eval_defining(dom: DomainModel, z) -> DefiningJet:
    z = np.asarray(z, dtype=complex)
    return DefiningJet(rho=float(rho(dom, z)), grad=d_rho(dom, z),
                       hess_hol=hess_hol(dom, z), hess_mixed=hess_mixed(dom, z))


# ---------------------------------------------------------------------------
# cutoff

def chi(dom: DomainModel, r: np.ndarray) -> np.ndarray:
    """Radial cutoff chi(|w-z|): 1 on [0, c/2], quintic smoothstep down to 0 at c."""
    if dom.chi_mode == "global":
        return np.ones_like(np.asarray(r, dtype=float))
    c = dom.cutoff_c
    s = np.clip((np.asarray(r, dtype=float) - 0.5 * c) / (0.5 * c), 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)


def chi_prime(dom: DomainModel, r: np.ndarray) -> np.ndarray:
    if dom.chi_mode == "global":
        return np.zeros_like(np.asarray(r, dtype=float))
    c = dom.cutoff_c
    s = np.clip((np.asarray(r, dtype=float) - 0.5 * c) / (0.5 * c), 0.0, 1.0)
    return -30.0 * s ** 2 * (1.0 - s) ** 2 * (2.0 / c)


# ---------------------------------------------------------------------------
# Levi polynomial and the two g's

_BASE_TOL = 1e-10


def levi_polynomial(dom: DomainModel, w, z) -> complex:
    """P_w(z); the base point w must lie on bD (|rho(w)| <= 1e-10)."""
    w = np.asarray(w, dtype=complex)
    z = np.asarray(z, dtype=complex)
    rw = float(rho(dom, w))
    if abs(rw) > _BASE_TOL:
        raise ValueError(f"Levi polynomial base point off the boundary: rho={rw:.3e}")
    return _levi_poly_raw(dom, w, z)


def _levi_poly_raw(dom, w, z):
    v = z - w
    lin = (d_rho(dom, w) * v).sum(axis=-1)
    if dom.kind == "perturbed_ball" and dom.amplitude != 0.0:
        H = hess_hol(dom, w)
        quad = 0.5 * np.einsum("...jk,...j,...k->...", H, v, v)
        return lin + quad
    return lin


def levi_form(dom: DomainModel, w, v) -> float:
    """Levi form sum rho_jk~(w) v_j conj(v_k); >= min(axes)*|v|^2 on all models."""
    w = np.asarray(w, dtype=complex)
    rw = float(rho(dom, w))
    if abs(rw) > _BASE_TOL:
        raise ValueError(f"levi_form base point off the boundary: rho={rw:.3e}")
    v = np.asarray(v, dtype=complex)
    a = np.asarray(dom.axes)
    return float((a * (v.real ** 2 + v.imag ** 2)).sum(axis=-1))


def _pairwise_levi(dom: DomainModel, W: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """P_{w_s}(z_t) for all pairs: W (S,n) sources, Z (T,n) targets -> (T,S)."""
    gradW = d_rho(dom, W)                       # (S,n)
    V = Z[:, None, :] - W[None, :, :]           # (T,S,n)
    P = np.einsum("sn,tsn->ts", gradW, V)
    if dom.kind == "perturbed_ball" and dom.amplitude != 0.0:
        m = dom.frequency
        h11 = 0.5 * dom.amplitude * m * (m - 1) * W[:, 0] ** (m - 2)   # (S,)
        P = P + 0.5 * h11[None, :] * V[..., 0] ** 2
    return P


def _pairwise_r2(W: np.ndarray, Z: np.ndarray) -> np.ndarray:
    diff = Z[:, None, :] - W[None, :, :]
    return (diff.real ** 2 + diff.imag ** 2).sum(axis=-1)


def pairwise_g_boundary(dom: DomainModel, W: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """g(w_s, z_t) = chi*(-P_{w_s}(z_t)) + (1-chi)|w-z|^2 for all pairs -> (T,S).

    Sources W must lie on bD; targets Z may be anywhere in the closure.
    """
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    P = _pairwise_levi(dom, W, Z)
    if dom.chi_mode == "global":
        return -P
    r2 = _pairwise_r2(W, Z)
    x = chi(dom, np.sqrt(r2))
    return x * (-P) + (1.0 - x) * r2


def pairwise_g_interior(dom: DomainModel, W: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """g(w_s, z_t) = -rho(w) - chi*P_{w_s}(z_t) + (1-chi)|w-z|^2, pairs -> (T,S).

    Base points w range over the closed domain (no boundary restriction).
    """
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    P = _pairwise_levi(dom, W, Z)
    rw = rho(dom, W)[None, :]
    if dom.chi_mode == "global":
        return -rw - P
    r2 = _pairwise_r2(W, Z)
    x = chi(dom, np.sqrt(r2))
    return -rw - x * P + (1.0 - x) * r2


def g_boundary(dom: DomainModel, w, z) -> complex:
    w = np.asarray(w, dtype=complex)
    rw = float(rho(dom, w))
    if abs(rw) > _BASE_TOL:
        raise ValueError(f"g_boundary base point off the boundary: rho={rw:.3e}")
    return complex(pairwise_g_boundary(dom, w[None, :], np.asarray(z, dtype=complex)[None, :])[0, 0])


def g_interior(dom: DomainModel, w, z) -> complex:
    w = np.asarray(w, dtype=complex)
    z = np.asarray(z, dtype=complex)
    return complex(pairwise_g_interior(dom, w[None, :], z[None, :])[0, 0])


# ---------------------------------------------------------------------------
# generating form

@dataclass
class GeneratingForm:
    """First-order data of the (1,0) generating form G at a pair (w, z).

    G:      (n,) coefficients, <G(w,z), w-z> = g(w,z) + rho(w)
            (boundary flavor has rho(w) = 0, so <G, w-z> = g there)
    g:      denominator (boundary flavor by default, interior on request)
    eta:    G/g; <eta, w-z> = 1 in the boundary flavor
    dbar_G: (n,n) array, dbar_G[k, j] = d G_j / d w~_k
    dbar_g: (n,) array, d g / d w~_k
    dbar_z_G: (n,n) array, dbar_z_G[k, j] = d G_j / d z~_k; identically zero on
            Hermitian models with the global branch (G_j holomorphic in z there)
    """

    G: np.ndarray
    g: complex
    eta: np.ndarray
    dbar_G: np.ndarray
    dbar_g: np.ndarray
    dbar_z_G: np.ndarray


def _g_coefficients(dom, w, z, interior):
    """Shared scalar-pair expansion of G, g and their w~-derivatives."""
    w = np.asarray(w, dtype=complex)
    z = np.asarray(z, dtype=complex)
    v = w - z                                     # note: w - z, not z - w
    r2 = float((v.real ** 2 + v.imag ** 2).sum())
    r = np.sqrt(r2)
    x = float(chi(dom, r))
    xp = float(chi_prime(dom, r))
    grad = d_rho(dom, w)
    Hh = hess_hol(dom, w)
    Hm = hess_mixed(dom, w)

    A = grad - 0.5 * (Hh @ v)                     # chi-branch coefficients
    B = np.conj(v)                                # far-branch coefficients
    G = x * A + (1.0 - x) * B

    P = (grad * (-v)).sum() + 0.5 * v @ (Hh @ v)   # P_w(z); z - w = -v, even quad
    gval = x * (-P) + (1.0 - x) * r2
    if interior:
        gval = -float(rho(dom, w)) - x * P + (1.0 - x) * r2

    # d/dw~_k of chi(|w-z|): chain through r; dr/dw~_k = v_k / (2r)
    dchi = np.zeros(dom.n, dtype=complex)
    if xp != 0.0 and r > 0:
        dchi = xp * v / (2.0 * r)

    # dbar of the coefficient vectors. dA_j/dw~_k = rho_jk~ (third order vanishes,
    # and d v / d w~ = 0 since v enters A holomorphically); dB_j/dw~_k = delta_jk.
    dbar_G = np.empty((dom.n, dom.n), dtype=complex)
    dbar_z_G = np.empty((dom.n, dom.n), dtype=complex)
    for k in range(dom.n):
        dbar_G[k, :] = dchi[k] * (A - B) + x * Hm[:, k] + (1.0 - x) * _unit(dom.n, k)
        # z~-side: dr/dz~_k = -v_k/(2r), dA/dz~ = 0 (A holomorphic in z),
        # dB_j/dz~_k = -delta_jk
        dbar_z_G[k, :] = -dchi[k] * (A - B) - (1.0 - x) * _unit(dom.n, k)

    # dbar of g itself.
    # boundary: g = chi*(-P) + (1-chi) r^2
    # interior: g = -rho(w) - chi*P + (1-chi) r^2
    # dP/dw~_k = sum_j rho_jk~ (z_j - w_j) = -(Hm^T v)_k ; d r^2/dw~_k = v_k
    dP = -(Hm.T @ v)
    dbar_g = dchi * (-P - r2) + x * (-dP) + (1.0 - x) * v
    if interior:
        dbar_g = dbar_g - np.conj(grad)
    return G, complex(gval), dbar_G, dbar_g, dbar_z_G


def _unit(n, k):
    e = np.zeros(n, dtype=complex)
    e[k] = 1.0
    return e


def _pairwise_generating_form_1d(dom: DomainModel, W: np.ndarray,
                                 Z: np.ndarray, interior: bool):
    # scalar specialization of the n=1 case: same formulas as the vector
    # path below with the coordinate axes stripped, roughly halves the
    # temporary traffic that dominates large assemblies
    v = W[None, :, 0] - Z[:, None, 0]                    # (T,S)
    r2 = v.real ** 2 + v.imag ** 2
    grad = d_rho(dom, W)[:, 0]
    h = hess_hol(dom, W)[:, 0, 0]
    m = hess_mixed(dom, W)[:, 0, 0]
    hv = h[None, :] * v
    A = grad[None, :] - 0.5 * hv
    P = -grad[None, :] * v + 0.5 * v * hv

    r = np.sqrt(r2)
    x = chi(dom, r)
    if np.all(x == 1.0):
        G, g = A, -P
        dbar_G = np.broadcast_to(m[None, :], v.shape)
        dbar_g = m[None, :] * v
    else:
        xp = chi_prime(dom, r)
        B = np.conj(v)
        G = x * A + (1.0 - x) * B
        g = x * (-P) + (1.0 - x) * r2
        with np.errstate(invalid="ignore", divide="ignore"):
            dchi = np.where(r > 0, xp / (2.0 * r), 0.0) * v
        dbar_G = dchi * (A - B) + x * m[None, :] + (1.0 - x)
        dP = -m[None, :] * v
        dbar_g = dchi * (-P - r2) + x * (-dP) + (1.0 - x) * v
    if interior:
        g = -rho(dom, W)[None, :] + g
        dbar_g = dbar_g - np.conj(grad)[None, :]
    return (G[..., None], g, dbar_G[..., None, None], dbar_g[..., None])


def pairwise_generating_form(dom: DomainModel, W: np.ndarray, Z: np.ndarray,
                             interior: bool = False):
    """Vectorized generating-form data for all (target, source) pairs.

    W (S, n) are the integration sources, Z (T, n) the evaluation targets.
    Returns (G, g, dbar_G, dbar_g) with shapes (T,S,n), (T,S), (T,S,n,n)
    indexed [k, j] = d G_j / d w~_k, and (T,S,n).  Matches the scalar
    generating_form pairwise; kernel assembly calls this in row blocks.
    """
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    n = dom.n
    if n == 1:
        return _pairwise_generating_form_1d(dom, W, Z, interior)
    v = W[None, :, :] - Z[:, None, :]                   # w - z, (T,S,n)
    r2 = (v.real ** 2 + v.imag ** 2).sum(axis=-1)
    r = np.sqrt(r2)
    x = chi(dom, r)
    xp = chi_prime(dom, r)
    grad = d_rho(dom, W)                                # (S,n)
    Hh = hess_hol(dom, W)                               # (S,n,n)
    Hm = hess_mixed(dom, W)

    Hhv = np.einsum("sjk,tsk->tsj", Hh, v)
    A = grad[None, :, :] - 0.5 * Hhv
    B = np.conj(v)
    xe = x[..., None]
    G = xe * A + (1.0 - xe) * B

    P = -(grad[None, :, :] * v).sum(axis=-1) \
        + 0.5 * np.einsum("tsj,tsj->ts", v, Hhv)
    g = x * (-P) + (1.0 - x) * r2
    if interior:
        g = -rho(dom, W)[None, :] - x * P + (1.0 - x) * r2

    with np.errstate(invalid="ignore", divide="ignore"):
        dchi = np.where(r > 0, xp / (2.0 * r), 0.0)[..., None] * v
    AB = A - B
    eye = np.eye(n)[None, None]
    dbar_G = (dchi[..., :, None] * AB[..., None, :]
              + xe[..., None] * np.swapaxes(Hm, 1, 2)[None]
              + (1.0 - xe[..., None]) * eye)
    dP = -np.einsum("sjk,tsj->tsk", Hm, v)
    dbar_g = dchi * (-P - r2)[..., None] + xe * (-dP) + (1.0 - xe) * v
    if interior:
        dbar_g = dbar_g - np.conj(grad)[None, :, :]
    return G, g, dbar_G, dbar_g


def generating_form(dom: DomainModel, w, z, interior: bool = False) -> GeneratingForm:
    """Generating form data at (w, z); w on bD unless interior=True."""
    if not interior:
        rw = float(rho(dom, np.asarray(w, dtype=complex)))
        if abs(rw) > _BASE_TOL:
            raise ValueError(f"generating form base point off bD: rho={rw:.3e}")
    G, gval, dbar_G, dbar_g, dbar_z_G = _g_coefficients(dom, w, z, interior)
    if gval == 0:
        raise ZeroDivisionError("g vanishes at the requested pair")
    return GeneratingForm(G=G, g=gval, eta=G / gval, dbar_G=dbar_G, dbar_g=dbar_g,
                          dbar_z_G=dbar_z_G)


# ---------------------------------------------------------------------------
# special (shear) coordinates

@dataclass
class SpecialFrame:
    """Unitary-plus-shear chart centered at w.

    to_special(z) returns zeta with zeta_1 = <d rho(w), z-w>/|d rho(w)|
    + quadratic shear, zeta_j = rotated orthogonal components.  The shear
    absorbs the holomorphic Hessian so that the Levi polynomial at w is
    |d rho(w)| * zeta_1 exactly.
    """

    w: np.ndarray
    U: np.ndarray          # (n,n) unitary, first row = d rho(w)/|d rho(w)|
    shear: np.ndarray      # (n,n) symmetric quadratic coefficients for zeta_1
    scale: float           # |d rho(w)|

    def to_special(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=complex)
        single = Z.ndim == 1
        Y = (np.atleast_2d(Z) - self.w) @ self.U.T
        quad = 0.5 * np.einsum("jk,tj,tk->t", self.shear, Y, Y)
        out = Y.copy()
        out[:, 0] += quad
        return out[0] if single else out

    def from_special(self, zeta: np.ndarray, tol: float = 1e-14) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=complex)
        single = zeta.ndim == 1
        Zt = np.atleast_2d(zeta).copy()
        Y = Zt.copy()
        # invert the shear in the first component by fixed-point iteration;
        # the quadratic coefficients are O(amplitude), so this converges fast
        for _ in range(60):
            quad = 0.5 * np.einsum("jk,tj,tk->t", self.shear, Y, Y)
            Y1_new = Zt[:, 0] - quad
            delta = np.abs(Y1_new - Y[:, 0]).max()
            Y[:, 0] = Y1_new
            if delta < tol:
                break
        out = Y @ np.conj(self.U) + self.w
        return out[0] if single else out


def special_coordinates(dom: DomainModel, w) -> SpecialFrame:
    w = np.asarray(w, dtype=complex)
    grad = d_rho(dom, w)
    scale = float(np.linalg.norm(grad))
    if scale < 1e-12:
        raise ValueError("degenerate gradient: no special frame at this point")
    U = _unitary_from_first_row(grad / scale)
    # Levi polynomial in rotated coords y = U(z-w):
    # P = scale*y_1 + 1/2 (U^H y)^T Hh (U^H y); fold the Hessian into a shear
    # on y_1: zeta_1 = y_1 + 1/2 y^T S y with S = conj(U) Hh U^H / scale.
    Hh = hess_hol(dom, w)
    S = (np.conj(U) @ Hh @ np.conj(U).T) / scale
    S = 0.5 * (S + S.T)
    return SpecialFrame(w=w, U=U, shear=S, scale=scale)


def _unitary_from_first_row(row: np.ndarray) -> np.ndarray:
    n = row.size
    U = np.zeros((n, n), dtype=complex)
    U[0] = row
    k = 1
    for j in range(n):
        if k >= n:
            break
        cand = _unit(n, j)
        for i in range(k):
            cand = cand - np.vdot(U[i], cand) * U[i]
        norm = np.linalg.norm(cand)
        if norm > 1e-8:
            U[k] = cand / norm
            k += 1
    if k < n:
        raise RuntimeError("Gram-Schmidt failed to complete the frame")
    return U


# ---------------------------------------------------------------------------
# boundary parametrization helpers

def boundary_radius(dom: DomainModel, directions: np.ndarray) -> np.ndarray:
    """Radius r(omega) > 0 with rho(r*omega) = 0 for unit directions omega.

    Closed form for ball/ellipsoid; Newton (to 1e-14) for the perturbed ball.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=complex))
    a = np.asarray(dom.axes)
    q = (a * (directions.real ** 2 + directions.imag ** 2)).sum(axis=-1)
    r = 1.0 / np.sqrt(q)
    if dom.kind != "perturbed_ball" or dom.amplitude == 0.0:
        return r
    m = dom.frequency
    c = dom.amplitude * (directions[:, 0] ** m).real
    for _ in range(80):
        f = q * r * r - 1.0 + c * r ** m
        fp = 2.0 * q * r + m * c * r ** (m - 1)
        step = f / fp
        r = r - step
        if np.abs(step).max() < 1e-15:
            break
    return r


def random_boundary_points(dom: DomainModel, count: int, rng) -> np.ndarray:
    """Draw boundary points: random directions on the unit sphere of C^n,
    pushed to bD along the ray."""
    v = rng.standard_normal((count, 2 * dom.n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    omega = v[:, :dom.n] + 1j * v[:, dom.n:]
    r = boundary_radius(dom, omega)
    return r[:, None] * omega


def displaced_boundary_points(dom: DomainModel, base: np.ndarray,
                              eps: float, rng) -> np.ndarray:
    """Boundary points at Euclidean distance ~eps from the given boundary
    points: jitter the direction and re-project along the ray."""
    base = np.atleast_2d(base)
    omega = base / np.linalg.norm(base, axis=1, keepdims=True)
    v = rng.standard_normal(base.shape) + 1j * rng.standard_normal(base.shape)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    cand = base + eps * v
    omega2 = cand / np.linalg.norm(cand, axis=1, keepdims=True)
    r = boundary_radius(dom, omega2)
    return r[:, None] * omega2


# ---------------------------------------------------------------------------
# analytic jet of the n=1 boundary curve w(theta) = r(theta) e^{i theta}

@dataclass
class CurveJet:
    theta: np.ndarray
    w: np.ndarray        # points on the curve
    wp: np.ndarray       # w'(theta)
    wpp: np.ndarray      # w''(theta)
    speed: np.ndarray    # |w'(theta)|
    rho_w: np.ndarray    # d rho/dz at w
    rho_ww: np.ndarray   # d^2 rho/dz^2 at w


def curve_jet(dom: DomainModel, theta: np.ndarray) -> CurveJet:
    """Second-order parametrization data of the n=1 boundary curve.

    r(theta) solves F(r, theta) = a r^2 - 1 + amp r^m cos(m theta) = 0;
    r', r'' come from implicit differentiation.
    """
    if dom.n != 1:
        raise ValueError("curve_jet is for n=1 domains")
    theta = np.asarray(theta, dtype=float)
    a = dom.axes[0]
    eith = np.exp(1j * theta)
    r = boundary_radius(dom, eith[:, None])
    amp, m = dom.amplitude, dom.frequency
    if dom.kind == "perturbed_ball" and amp != 0.0:
        cm, sm = np.cos(m * theta), np.sin(m * theta)
        Fr = 2.0 * a * r + amp * m * r ** (m - 1) * cm
        Ft = -amp * m * r ** m * sm
        Frr = 2.0 * a + amp * m * (m - 1) * r ** (m - 2) * cm
        Frt = -amp * m * m * r ** (m - 1) * sm
        Ftt = -amp * m * m * r ** m * cm
        rp = -Ft / Fr
        rpp = -(Frr * rp * rp + 2.0 * Frt * rp + Ftt) / Fr
    else:
        rp = np.zeros_like(r)
        rpp = np.zeros_like(r)
    w = (r * eith)[:, None]
    wp = ((rp + 1j * r) * eith)[:, None]
    wpp = ((rpp + 2j * rp - r) * eith)[:, None]
    return CurveJet(theta=theta, w=w, wp=wp[:, 0], wpp=wpp[:, 0],
                    speed=np.abs(wp[:, 0]),
                    rho_w=d_rho(dom, w)[:, 0],
                    rho_ww=hess_hol(dom, w)[:, 0, 0])


# ---------------------------------------------------------------------------
# coercivity scan

@dataclass
class CoercivityReport:
    kappa_boundary: float
    kappa_interior: float
    samples: int
    failed: bool
    worst_pair: tuple

    def __str__(self):
        status = "FAILED-COERCIVITY" if self.failed else "ok"
        return (f"coercivity[{status}]: kappa_boundary={self.kappa_boundary:.4f} "
                f"kappa_interior={self.kappa_interior:.4f} ({self.samples} samples)")


def verify_coercivity(dom: DomainModel, samples: int = 4000,
                      seed: int = 7) -> CoercivityReport:
    """Empirical coercivity constants.

    kappa_boundary = inf Re g_bdy(w,z) / (-rho(z) + |w-z|^2), w on bD,
    kappa_interior = inf Re g_int(w,z) / (-rho(w) - rho(z) + |w-z|^2),
    over random pairs with z in the closed domain.  Nonpositive values
    flag FAILED-COERCIVITY (cutoff_c needs shrinking).
    """
    rng = np.random.default_rng(seed)
    W = random_boundary_points(dom, samples, rng)
    # targets: mix of boundary points and interior points at random depth
    Zb = random_boundary_points(dom, samples, rng)
    t = rng.uniform(0.05, 1.0, size=samples) ** 0.5
    dirs = Zb / np.linalg.norm(Zb, axis=1, keepdims=True)
    Zi = (t * boundary_radius(dom, dirs))[:, None] * dirs
    kb = np.inf
    ki = np.inf
    worst = None
    for Z, which in ((Zb, "b"), (Zi, "i")):
        gb = np.array([g_boundary(dom, W[i], Z[i]) for i in range(samples)])
        denom_b = -rho(dom, Z) + ((W - Z).real ** 2 + (W - Z).imag ** 2).sum(axis=1)
        mask = denom_b > 1e-14
        ratios = gb.real[mask] / denom_b[mask]
        if ratios.size:
            j = int(np.argmin(ratios))
            if ratios[j] < kb:
                kb = float(ratios[j])
                worst = (W[mask][j], Z[mask][j], "boundary")
        gi = np.array([g_interior(dom, Zi[i], Z[i]) for i in range(samples)])
        denom_i = (-rho(dom, Zi) - rho(dom, Z)
                   + ((Zi - Z).real ** 2 + (Zi - Z).imag ** 2).sum(axis=1))
        mask = denom_i > 1e-14
        ratios = gi.real[mask] / denom_i[mask]
        if ratios.size:
            j = int(np.argmin(ratios))
            if ratios[j] < ki:
                ki = float(ratios[j])
                worst = (Zi[mask][j], Z[mask][j], "interior")
    failed = not (kb > 0 and ki > 0)
    return CoercivityReport(kappa_boundary=kb, kappa_interior=ki,
                            samples=samples, failed=failed, worst_pair=worst)
