"""Skew part, resolvent, and projection reconstruction.

The orthogonal projections are recovered from the explicit one-sided
operators through the identity P (I - (K* - K)) = K: form the skew part
A = K* - K, solve against I - A, and compose.  A gains one order of
kernel decay over K itself, which is what keeps the resolvent tame; the
checks in this module measure that gain directly.

Adjoints are taken on the unweighted L^2 of the base measure, so A acts
on node samples as adjoint(K).matrix() - K.matrix().  On the disk the
grids are rotation-invariant and every kernel here commutes with the
rotation; the *_circulant entry points diagonalize the angular index by
FFT and reproduce the dense arithmetic exactly per Fourier mode, which
is what makes the large reconstruction studies affordable.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .domain_geometry import (DomainModel, g_boundary, random_boundary_points,
                              displaced_boundary_points, rho,
                              pairwise_g_boundary)
from .measures_quadrature import Grid, leray_form_factor
from . import operators as op
from . import quasi_metric as qm
from .weights import Weight, weighted_norm

_COND_CAP = 1e12


# ---------------------------------------------------------------------------
# skew part


@dataclass
class SkewOperator:
    """A = K* - K acting on node samples, with its decay bookkeeping."""

    base: op.KernelMatrix
    A: np.ndarray
    tag: str
    decay_target: float
    skew_defect: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.base.source

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.A @ f

    def entry_kernel(self) -> np.ndarray:
        """Kernel difference wrt the base measure: A with weights divided
        out of the columns."""
        return self.A / self.grid.weights[None, :]


def skew_part(K: op.KernelMatrix) -> SkewOperator:
    if not K.is_square:
        raise ValueError("skew part needs a square operator")
    M = K.matrix()
    A = op.adjoint(K).matrix() - M
    grid = K.source
    w = grid.weights
    wa = w[:, None] * A
    defect = np.abs(wa + np.conj(wa.T)).max()
    # normalize by the base operator, not by A itself: on symmetric
    # domains A sits at rounding level while the identity stays exact
    scale = np.abs(w[:, None] * M).max()
    if scale > 0 and defect > 1e-10 * scale:
        raise ValueError(f"skew part lost skew-adjointness: defect {defect:.3e}")
    n = grid.domain.n
    if grid.kind == "boundary":
        tag, target = qm.BOUNDARY_TAG, 2 * n - 1
    else:
        tag, target = qm.INTERIOR_TAG, n + 0.5
    return SkewOperator(base=K, A=A, tag=tag, decay_target=float(target),
                        skew_defect=float(defect))


@dataclass
class SkewReport:
    sup_normalized: float
    slope: float
    sup_boundary_normalized: float | None
    degenerate_zero: bool
    max_entry: float
    window: tuple = (np.nan, np.nan)
    n_bins: int = 0

    def __str__(self):
        if self.degenerate_zero:
            return (f"skew size: DEGENERATE-ZERO "
                    f"(max entry {self.max_entry:.3e})")
        extra = ("" if self.sup_boundary_normalized is None else
                 f", boundary-distance sup {self.sup_boundary_normalized:.4g}")
        return (f"skew size: sup normalized {self.sup_normalized:.4g}, "
                f"fitted slope {self.slope:.3f} over "
                f"[{self.window[0]:.3g}, {self.window[1]:.3g}]{extra}")


def skew_size_check(S: SkewOperator, span: float = 10.0) -> SkewReport:
    """Normalized sup and near-diagonal decay slope of the skew kernel."""
    grid = S.grid
    kern = S.entry_kernel()
    offd = ~np.eye(grid.size, dtype=bool)
    amax = float(np.abs(kern[offd]).max())
    if amax < 1e-9:
        return SkewReport(0.0, np.nan, None, True, amax)
    D = qm.pairwise_dist(grid.domain, S.tag, grid.nodes, grid.nodes)
    r = np.abs(kern[offd])
    d = D[offd]
    sup = float((r * d ** S.decay_target).max())
    slope, window, n_bins = op._envelope_slope(d, r, span=span)
    bd_sup = None
    if S.tag == qm.INTERIOR_TAG:
        delta = -rho(grid.domain, grid.nodes)
        m = np.maximum(delta[:, None], delta[None, :])[offd]
        bd_sup = float((r * m ** S.decay_target).max())
    return SkewReport(sup, slope, bd_sup, False, amax, window, n_bins)


def streamed_skew_kernel_max(dom: DomainModel, bgrid: Grid,
                             block: int = 512) -> float:
    """max |A(z,w)| for the boundary main-term kernel, assembled in
    target blocks so large grids never hold a dense matrix."""
    W = bgrid.nodes
    lam = bgrid.leray_levi * leray_form_factor(dom.n)
    N, n = bgrid.size, dom.n
    out = 0.0
    for lo in range(0, N, block):
        zi = W[lo:lo + block]
        t = np.arange(lo, min(lo + block, N))
        rows = np.arange(len(t))
        Krow = pairwise_g_boundary(dom, W, zi)      # [i, j] = g(w_j, z_i)
        Kcol = pairwise_g_boundary(dom, zi, W)      # [j, i] = g(w_i, z_j)
        Krow[rows, t] = 1.0
        Kcol[t, rows] = 1.0
        Ab = np.conj(Kcol.T) ** (-n) * lam[t, None] \
            - Krow ** (-n) * lam[None, :]
        Ab[rows, t] = 0.0
        out = max(out, float(np.abs(Ab).max()))
    return out


# ---------------------------------------------------------------------------
# conjugate-symmetry defect of the generating function


@dataclass
class DefectReport:
    exact_symmetry: bool
    sup_defect: float
    slope: float
    n_pairs: int
    window: tuple

    def __str__(self):
        if self.exact_symmetry:
            return (f"conjugate symmetry exact: sup defect "
                    f"{self.sup_defect:.3e} over {self.n_pairs} pairs")
        return (f"symmetry defect exponent {self.slope:.3f} over "
                f"{self.n_pairs} pairs in [{self.window[0]:.1e}, "
                f"{self.window[1]:.1e}]")


def symmetry_defect_fit(dom: DomainModel, n_pairs: int = 600, seed: int = 0,
                        window: tuple = (1e-3, 1e-1)) -> DefectReport:
    """Fit |g(w,z) - conj g(z,w)| against |w-z| on near-boundary pairs.

    Quadratic domains are exactly symmetric; that case is certified
    instead of fitted.
    """
    rng = np.random.default_rng(seed)
    levels = np.geomspace(window[0], window[1] / 2, 12)
    per = max(n_pairs // len(levels), 4)
    Ws, Zs = [], []
    for eps in levels:
        base = random_boundary_points(dom, per, rng)
        Ws.append(base)
        Zs.append(displaced_boundary_points(dom, base, eps, rng))
    W = np.concatenate(Ws)
    Z = np.concatenate(Zs)
    sep = np.linalg.norm(W - Z, axis=1)
    keep = (sep >= window[0]) & (sep <= window[1])
    W, Z, sep = W[keep], Z[keep], sep[keep]
    defect = np.abs([g_boundary(dom, w, z) - np.conj(g_boundary(dom, z, w))
                     for w, z in zip(W, Z)])
    sup = float(defect.max())
    if sup < 1e-13:
        return DefectReport(True, sup, np.nan, len(W), window)
    pos = defect > 0
    coef = np.polynomial.polynomial.polyfit(np.log(sep[pos]),
                                            np.log(defect[pos]), 1)
    return DefectReport(False, sup, float(coef[1]), len(W), window)


# ---------------------------------------------------------------------------
# resolvent


def _spectral_norm_op(matvec, rmatvec, n: int, tol: float = 1e-8,
                      maxit: int = 10000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(maxit):
        u = matvec(v)
        s = np.linalg.norm(u)
        if s == 0.0:
            return 0.0
        v = rmatvec(u)
        nv = np.linalg.norm(v)
        est = nv / s
        v /= nv
        if abs(est - prev) <= tol * max(est, 1.0):
            return float(est)
        prev = est
    raise RuntimeError(f"power iteration did not converge in {maxit} steps")


def _spectral_norm(M: np.ndarray, **kw) -> float:
    if M.shape[0] <= 2048:
        return float(np.linalg.norm(M, 2))
    return _spectral_norm_op(lambda v: M @ v,
                             lambda v: np.conj(M.T) @ v, M.shape[0], **kw)


def _factor(A: np.ndarray):
    M = np.eye(A.shape[0], dtype=complex) - A
    lu = sla.lu_factor(M)
    gecon = sla.get_lapack_funcs("gecon", (M,))
    rcond, _ = gecon(lu[0], np.linalg.norm(M, 1))
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if cond > _COND_CAP:
        raise ValueError(f"SINGULAR: condition estimate {cond:.3e} of I - A "
                         f"exceeds {_COND_CAP:.0e}")
    return M, lu, float(cond)


@dataclass
class ResolventRecord:
    x: np.ndarray
    residual: float
    condition: float
    nu: float
    method: str
    history: np.ndarray | None = None
    bounds: np.ndarray | None = None

    def bound_satisfied(self) -> bool:
        if self.history is None or self.bounds is None:
            return True
        return bool(np.all(self.history <= self.bounds + 1e-300))


def resolvent_solve(A, b: np.ndarray, method: str = "direct",
                    max_terms: int = 30) -> ResolventRecord:
    """Solve (I - A)x = b directly or by Neumann partial sums.

    The Neumann route also runs the direct solve and records per-step
    errors; when the measured spectral norm nu is below one the errors
    are compared against nu^{K+1}/(1-nu) * |b|.
    """
    if isinstance(A, SkewOperator):
        A = A.A
    b = np.asarray(b, dtype=complex)
    M, lu, cond = _factor(A)
    x = sla.lu_solve(lu, b)
    residual = float(np.linalg.norm(M @ x - b))
    nu = _spectral_norm(A)
    if method == "direct":
        return ResolventRecord(x, residual, cond, nu, "direct")
    if method != "neumann":
        raise ValueError(f"unknown method {method!r}")
    term = b.copy()
    part = b.copy()
    errs = [np.linalg.norm(part - x)]
    for _ in range(max_terms):
        term = A @ term
        part = part + term
        errs.append(np.linalg.norm(part - x))
    history = np.array(errs)
    bounds = None
    if nu < 1.0:
        bn = np.linalg.norm(b)
        bounds = nu ** (np.arange(max_terms + 1) + 1) / (1.0 - nu) * bn
    return ResolventRecord(x, residual, cond, nu, "neumann", history, bounds)


# ---------------------------------------------------------------------------
# projection reconstruction


def reconstruct_projection(K: op.KernelMatrix,
                           A: np.ndarray | None = None) -> op.KernelMatrix:
    """P = K (I - A)^{-1} with idempotence and self-adjointness defects
    reported in the meta block."""
    if A is None:
        A = skew_part(K).A
    elif isinstance(A, SkewOperator):
        A = A.A
    _, lu, cond = _factor(A)
    inv = sla.lu_solve(lu, np.eye(A.shape[0], dtype=complex))
    P = K.matrix() @ inv
    grid = K.source
    w = grid.weights
    idem = _spectral_norm_op(lambda v: P @ (P @ v) - P @ v,
                             lambda v: np.conj(P.T) @ np.conj(P.T) @ v
                             - np.conj(P.T) @ v, len(w), tol=1e-6, seed=1)
    selfadj = _spectral_norm_op(
        lambda v: np.conj(P.T) @ (w * v) / w - P @ v,
        lambda v: w * (P @ (v / w)) - np.conj(P.T) @ v,
        len(w), tol=1e-6, seed=1)
    kernel = P / w[None, :]
    return op.KernelMatrix(kernel=kernel, source=grid, targets=grid.nodes,
                           measure=op.LEBESGUE, diagonal="included",
                           jump=0.0, target_grid=grid,
                           label=f"projection({K.label})",
                           meta={"condition": cond,
                                 "idempotence_defect": float(idem),
                                 "self_adjointness_defect": float(selfadj)})


# ---------------------------------------------------------------------------
# weighted norms and improvement


@dataclass
class NormEstimate:
    value: float
    method: str
    p: float

    def __str__(self):
        return f"|P|_{{{self.p},sigma}} ~ {self.value:.6g} ({self.method})"


def weighted_operator_norm(P: op.KernelMatrix, sigma: Weight, p: float,
                           n_samples: int = 200, seed: int = 0,
                           tol: float = 1e-8,
                           maxit: int = 10000) -> NormEstimate:
    """Operator norm on L^p_sigma; exact largest singular value for p=2,
    a seeded random lower bound otherwise."""
    grid = P.source
    if p == 2:
        d = np.sqrt(sigma.values * grid.weights)
        M = P.matrix()
        mv = lambda v: d * (M @ (v / d))
        rv = lambda v: np.conj(M.T) @ (d * v) / d
        val = _spectral_norm_op(mv, rv, grid.size, tol=tol, maxit=maxit,
                                seed=seed)
        return NormEstimate(val, "largest singular value of the "
                            "similarity-transformed matrix", 2.0)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_samples):
        f = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
        den = weighted_norm(grid, f, sigma, p)
        best = max(best, weighted_norm(grid, P.apply(f), sigma, p) / den)
    return NormEstimate(best, f"lower bound over {n_samples} random samples",
                        float(p))


@dataclass
class ImprovementReport:
    max_ratio: float
    p: float
    eps: float
    n_trials: int

    def __str__(self):
        return (f"|Af|_{{{self.p + self.eps}}} / |f|_{{{self.p}}} <= "
                f"{self.max_ratio:.4g} over {self.n_trials} trials")


def _lp_norm(w: np.ndarray, f: np.ndarray, q: float) -> float:
    return float((w * np.abs(f) ** q).sum() ** (1.0 / q))


def improvement_check(S: SkewOperator, p: float, eps: float,
                      trials: int = 64, seed: int = 0) -> ImprovementReport:
    """Max of |Af|_{p+eps}/|f|_p over seeded random samples, half of them
    rough (node-wise random signs)."""
    n = S.grid.domain.n
    limit = 1.0 / (2 * n - 1) if S.grid.kind == "boundary" else 1.0 / (2 * n + 1)
    if not 0.0 <= eps < limit:
        raise ValueError(f"eps {eps} outside the improvement range "
                         f"[0, {limit:.4g})")
    rng = np.random.default_rng(seed)
    w = S.grid.weights
    best = 0.0
    for k in range(trials):
        if k % 2 == 0:
            f = rng.standard_normal(S.grid.size) \
                + 1j * rng.standard_normal(S.grid.size)
        else:
            f = rng.choice([-1.0, 1.0], S.grid.size) \
                + 1j * rng.choice([-1.0, 1.0], S.grid.size)
        best = max(best, _lp_norm(w, S.A @ f, p + eps) / _lp_norm(w, f, p))
    return ImprovementReport(best, float(p), float(eps), trials)


# ---------------------------------------------------------------------------
# truncation and double norm


def _quintic_profile(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return 1.0 - u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)


@dataclass
class TruncationReport:
    near: op.KernelMatrix
    far: op.KernelMatrix
    s: float
    c: float
    s_values: np.ndarray
    skew_norms: np.ndarray
    skew_norms_sigma: np.ndarray | None
    far_sup: float


def truncation_split(K: op.KernelMatrix, s: float, sigma: Weight = None,
                     ladder: int = 4, c: float = 0.5) -> TruncationReport:
    """Split K at distance scale s with a quintic cutoff (1 below c*s,
    0 above s) and track the skew norm of the near part down a dyadic
    ladder of scales."""
    grid = K.source
    if s <= grid.separation:
        raise ValueError("truncation scale below the grid separation")
    tag = qm.BOUNDARY_TAG if grid.kind == "boundary" else qm.INTERIOR_TAG
    D = qm.pairwise_dist(grid.domain, tag, grid.nodes, grid.nodes)

    def split_at(sk):
        chi = _quintic_profile((D - c * sk) / ((1.0 - c) * sk))
        near = op.KernelMatrix(kernel=K.kernel * chi, source=grid,
                               targets=grid.nodes, measure=K.measure,
                               diagonal=K.diagonal, jump=K.jump,
                               target_grid=grid, label=f"{K.label}|near",
                               meta=dict(K.meta, scale=sk))
        return near, chi

    near, chi = split_at(s)
    far = op.KernelMatrix(kernel=K.kernel * (1.0 - chi), source=grid,
                          targets=grid.nodes, measure=K.measure,
                          diagonal=K.diagonal, jump=0.0, target_grid=grid,
                          label=f"{K.label}|far", meta=dict(K.meta, scale=s))
    s_values, norms, norms_sigma = [], [], []
    sk = s
    for _ in range(ladder):
        if sk <= 2.0 * grid.separation:
            break
        nk, _ = split_at(sk)
        Ak = skew_part(nk).A
        s_values.append(sk)
        norms.append(_spectral_norm(Ak))
        if sigma is not None:
            d = np.sqrt(sigma.values * grid.weights)
            norms_sigma.append(_spectral_norm(d[:, None] * Ak / d[None, :]))
        sk /= 2.0
    offd = ~np.eye(grid.size, dtype=bool)
    far_sup = float(np.abs(far.kernel[offd]).max())
    return TruncationReport(near, far, float(s), float(c),
                            np.array(s_values), np.array(norms),
                            np.array(norms_sigma) if sigma is not None
                            else None, far_sup)


def double_norm(K, sigma: Weight, p: float, grid: Grid = None) -> float:
    """Discrete mixed-norm integral of the sigma-twisted kernel; finite
    values witness compactness on L^p_sigma, growth under refinement
    witnesses its failure."""
    if p <= 1:
        raise ValueError("double norm needs p > 1")
    q = p / (p - 1.0)
    if isinstance(K, op.KernelMatrix):
        grid = K.source
        Kt = K.folded_kernel()
    else:
        if grid is None:
            raise ValueError("raw kernel arrays need an explicit grid")
        Kt = np.asarray(K)
    sv, w = sigma.values, grid.weights
    inner = (np.abs(Kt / sv[None, :]) ** q * (sv * w)[None, :]).sum(axis=1)
    val = ((inner ** (p / q)) * sv * w).sum()
    return float(val) if np.isfinite(val) else np.inf


# ---------------------------------------------------------------------------
# circulant fast path for rotation-invariant disk grids


@dataclass
class CirculantOperator:
    """Block-circulant realization of a disk kernel operator.

    Nodes are indexed (ring, angle) with identical angular offsets on
    every ring; the operator matrix is circulant over the angle index
    and the angular DFT turns it into one rings x rings block per
    frequency.  Exact (up to rounding) for rotation-invariant kernels.
    """

    grid: Grid
    rings: int
    angles: int
    ghat: np.ndarray            # (angles, rings, rings) folded-kernel symbol
    w_ring: np.ndarray          # (rings,) quadrature weight per ring
    jump: float
    label: str
    meta: dict = field(default_factory=dict)

    def khat(self) -> np.ndarray:
        K = self.ghat * self.w_ring[None, None, :]
        K[:, np.arange(self.rings), np.arange(self.rings)] += self.jump
        return K

    def ahat(self) -> np.ndarray:
        G = self.ghat
        return (np.conj(np.transpose(G, (0, 2, 1))) - G) \
            * self.w_ring[None, None, :]

    def skew_norm(self) -> float:
        # the angular DFT is unitary, so the 2-norm is the max over modes
        return float(np.linalg.svd(self.ahat(), compute_uv=False).max())

    def _mode_apply(self, blocks: np.ndarray, f: np.ndarray) -> np.ndarray:
        fh = np.fft.fft(f.reshape(self.rings, self.angles), axis=1)
        yh = np.einsum("mab,bm->am", blocks, fh)
        return np.fft.ifft(yh, axis=1).reshape(-1)

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self._mode_apply(self.khat(), f)


def circulant_symbol(kind: str, dom: DomainModel, grid: Grid,
                     **kw) -> CirculantOperator:
    """Assemble the per-mode symbol of a kernel operator from one
    generator row per ring."""
    if dom.kind != "ball" or dom.n != 1:
        raise ValueError("circulant path needs the rotation-invariant disk")
    if grid.kind == "boundary":
        rings, angles = 1, grid.size
        idx = np.array([0])
    else:
        layer = grid.params["layer_index"]
        rings = int(layer.max()) + 1
        angles = grid.size // rings
        idx = np.arange(rings) * angles
        if not np.array_equal(layer, np.repeat(np.arange(rings), angles)):
            raise ValueError("interior grid is not ring-major")
    if kind == "cauchy_fantappie" and grid.kind == "boundary":
        KM = op._cf_circle_kress(dom, grid, rows=idx)
    elif kind in ("c_sharp",):
        KM = op.build_c_sharp(dom, grid, targets=grid.nodes[idx],
                              allow_coincident=True)
        KM.kernel[np.arange(len(idx)), idx] = 0.0
    elif kind == "bergman_main":
        KM = op.build_bergman_main(dom, grid, targets=grid.nodes[idx])
    else:
        raise ValueError(f"unsupported circulant kind {kind!r}")
    # the symbol stores the folded (measure-ready) kernel; the adjoint
    # convention then only needs the plain ring weights
    F = KM.folded_kernel().reshape(rings, rings, angles)
    wg = grid.weights.reshape(rings, angles)
    if not np.allclose(wg, wg[:, :1], rtol=1e-12, atol=0):
        raise ValueError("ring weights are not rotation-invariant")
    if grid.kind == "boundary":
        lg = grid.leray_levi.reshape(rings, angles)
        if not np.allclose(lg, lg[:, :1], rtol=1e-12, atol=0):
            raise ValueError("reference density is not rotation-invariant")
    G = np.concatenate([F[..., :1], F[..., :0:-1]], axis=-1)
    ghat = np.moveaxis(np.fft.fft(G, axis=-1), -1, 0)
    return CirculantOperator(grid=grid, rings=rings, angles=angles,
                             ghat=ghat, w_ring=wg[:, 0].astype(float),
                             jump=KM.jump, label=f"circulant({kind})",
                             meta=dict(KM.meta))


@dataclass
class CirculantProjection:
    """P = K (I - A)^{-1} in per-mode block form."""

    base: CirculantOperator
    phat: np.ndarray
    nu: float
    condition: float

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.base._mode_apply(self.phat, f)

    def apply_adjoint(self, f: np.ndarray) -> np.ndarray:
        return self.base._mode_apply(
            np.conj(np.transpose(self.phat, (0, 2, 1))), f)

    def weighted_norm(self, sigma: Weight, tol: float = 1e-8,
                      maxit: int = 10000, seed: int = 0) -> float:
        # Lanczos (ARPACK) instead of plain power iteration: on fine
        # grids the top of the singular spectrum is nearly degenerate
        # and power iteration needs hundreds of matvecs.
        import scipy.sparse.linalg as spla
        d = np.sqrt(sigma.values * self.base.grid.weights)
        size = self.base.grid.size
        if np.ptp(d) <= 1e-12 * float(d.max()):
            # constant similarity cancels; the norm is exact per mode
            return float(np.linalg.svd(self.phat, compute_uv=False).max())
        lin = spla.LinearOperator(
            (size, size), dtype=complex,
            matvec=lambda v: d * self.apply(np.ravel(v) / d),
            rmatvec=lambda v: self.apply_adjoint(d * np.ravel(v)) / d)
        v0 = np.asarray(
            np.random.default_rng(seed).standard_normal(size), dtype=complex)
        s = spla.svds(lin, k=1, tol=tol, v0=v0, maxiter=maxit,
                      return_singular_vectors=False)
        return float(s[0])

    def kernel_rows(self) -> tuple:
        """Dense kernel rows for the ring seed nodes (angle index 0),
        for pointwise kernel comparisons."""
        R, M = self.base.rings, self.base.angles
        rows = np.fft.ifft(np.moveaxis(self.phat, 0, -1), axis=-1)
        flat = np.empty((R, R * M), dtype=complex)
        j = np.arange(M)
        back = (-j) % M
        for a in range(R):
            for b in range(R):
                flat[a, b * M:(b + 1) * M] = rows[a, b, back]
        idx = np.arange(R) * M
        kernel = flat / self.base.grid.weights[None, :]
        return idx, kernel


def circulant_projection(cop: CirculantOperator) -> CirculantProjection:
    ahat = cop.ahat()
    eye = np.eye(cop.rings, dtype=complex)[None]
    nu = float(np.linalg.svd(ahat, compute_uv=False).max())
    M = eye - ahat
    sv = np.linalg.svd(M, compute_uv=False)
    cond = float(sv.max() / sv.min())
    if cond > _COND_CAP:
        raise ValueError(f"SINGULAR: condition estimate {cond:.3e} of I - A "
                         f"exceeds {_COND_CAP:.0e}")
    phat = cop.khat() @ np.linalg.inv(M)
    return CirculantProjection(base=cop, phat=phat, nu=nu, condition=cond)
