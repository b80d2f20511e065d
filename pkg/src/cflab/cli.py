"""Experiment runner: every verification as a reproducible command.

Commands
    run CFG       execute the check named in the config, write report.json
                  (and a CSV when the check produces rows), exit 0 on pass
    sweep CFG     weighted-norm sweep to CSV, no assertions
    validate      fast invariant suite over all modules

Exit codes: 0 pass, 1 assertion failure (the failing invariant is named
on stdout and in report.json), 2 config error.

Config files are flat key-value text with [sections]; see the bundled
files under cflab/configs.  Outputs carry the config hash and seed and
are byte-identical across reruns with the same config.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    kind: str
    n: int
    axes: tuple
    amplitude: float
    frequency: int
    cutoff_c: float | None
    check: str
    resolutions: list
    tags: list
    family: str
    t_values: list
    p_values: list
    operator: str
    eps: float
    seed: int
    out: str
    config_hash: str
    path: str

    def domain_spec(self) -> dict:
        return {"kind": self.kind, "n": self.n, "axes": list(self.axes),
                "amplitude": self.amplitude, "frequency": self.frequency}


def _split(raw: str):
    return raw.replace(",", " ").split()


def _parse_resolution(tok: str):
    # boundary levels are plain ints, interior levels "ANGLESxLAYERS"
    if "x" in tok:
        a, b = tok.split("x")
        return (int(a), int(b))
    return int(tok)


TREND_CHECKS = {"ball_monomials", "weighted_sweep", "improvement",
                "double_norm", "skew_decay"}


def parse_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(raw.decode())
    except (configparser.Error, UnicodeDecodeError) as e:
        raise ConfigError(f"unparseable config: {e}")

    dom = cp["domain"] if cp.has_section("domain") else {}
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    sw = cp["sweep"] if cp.has_section("sweep") else {}

    if "seed" not in exp:
        raise ConfigError("seed is mandatory in [experiment]")
    check = exp.get("check", "")
    if not check:
        raise ConfigError("missing check name in [experiment]")

    kind = dom.get("kind", "ball")
    if kind not in ("ball", "ellipsoid", "perturbed_ball"):
        raise ConfigError(f"unsupported domain kind {kind!r}")
    resolutions = [_parse_resolution(t) for t in _split(exp.get("resolutions", ""))]
    if check in TREND_CHECKS and len(resolutions) < 2:
        raise ConfigError(f"check {check!r} is trend-based and needs at "
                          "least two resolutions")

    try:
        return ExperimentConfig(
            kind=kind,
            n=int(dom.get("n", "1")),
            axes=tuple(float(a) for a in _split(dom.get("axes", ""))),
            amplitude=float(dom.get("amplitude", "0.15")),
            frequency=int(dom.get("frequency", "3")),
            cutoff_c=float(dom["cutoff_c"]) if "cutoff_c" in dom else None,
            check=check,
            resolutions=resolutions,
            tags=_split(exp.get("tags", "")),
            family=sw.get("family", "boundary_power"),
            t_values=[float(t) for t in _split(sw.get("t", ""))],
            p_values=[float(p) for p in _split(sw.get("p", "2"))],
            operator=exp.get("operator", "cauchy_fantappie"),
            eps=float(exp.get("eps", "0.5")),
            seed=int(exp["seed"]),
            out=exp.get("out", "out"),
            config_hash=hashlib.sha256(raw).hexdigest()[:16],
            path=path,
        )
    except ValueError as e:
        raise ConfigError(f"bad config value: {e}")


def build_domain(cfg: ExperimentConfig):
    import cflab.domain_geometry as dm
    try:
        if cfg.kind == "ball":
            return dm.unit_ball(cfg.n)
        if cfg.kind == "ellipsoid":
            if not cfg.axes:
                raise ConfigError("ellipsoid needs axes")
            return dm.ellipsoid(cfg.axes)
        kw = {"amplitude": cfg.amplitude, "frequency": cfg.frequency}
        if cfg.cutoff_c is not None:
            kw["cutoff_c"] = cfg.cutoff_c
        return dm.perturbed_ball(cfg.n, **kw)
    except ValueError as e:
        raise ConfigError(f"domain rejected: {e}")


# ---------------------------------------------------------------------------
# output plumbing


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, cfg: ExperimentConfig, header: list, rows: list) -> None:
    lines = [f"# config = {cfg.config_hash}", f"# seed = {cfg.seed}",
             "# columns: " + ",".join(header), ",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float)
                              else str(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_report(cfg: ExperimentConfig, report: dict) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "report.json")
    _atomic_write(path, json.dumps(report, sort_keys=True, indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------
# checks (one per acceptance experiment; config supplies frozen parameters)

CHECKS = {}


def _check(name):
    def deco(fn):
        CHECKS[name] = fn
        return fn
    return deco


def _rel_l2(grid, got, want):
    import numpy as np
    scale = np.sqrt(np.sum(grid.weights * np.abs(want) ** 2))
    err = np.sqrt(np.sum(grid.weights * np.abs(got - want) ** 2))
    return float(err / scale) if scale > 0 else float(err)


@_check("disk_szego")
def check_disk_szego(cfg, ctx):
    import numpy as np
    import cflab.measures_quadrature as mq
    import cflab.operators as op
    import cflab.kerzman_stein as ks
    dom = ctx["domain"]
    N = cfg.resolutions[0] if cfg.resolutions else 1024
    b = mq.build_boundary_grid(dom, N)
    K = op.build_cauchy_fantappie(dom, b)
    S = ks.skew_part(K)
    failures, metrics = [], {}
    metrics["skew_max"] = float(np.abs(S.A).max())
    if metrics["skew_max"] > 1e-9:
        failures.append("szego-skew-vanishes")
    P = ks.reconstruct_projection(K, S).matrix()
    th = np.angle(b.nodes[:, 0])
    worst = 0.0
    for k in range(17):
        f = np.exp(1j * k * th)
        worst = max(worst, _rel_l2(b, P @ f, f))
    for k in range(1, 9):
        f = np.exp(-1j * k * th)
        worst = max(worst, _rel_l2(b, P @ f, np.zeros_like(f)))
    metrics["reconstruction_residual"] = worst
    if worst > 1e-6:
        failures.append("szego-mode-reproduction")
    if ctx.get("dump"):
        op.dump_matrix(K, os.path.join(cfg.out, "szego-base.txt"))
    return failures, metrics, None


@_check("disk_bergman")
def check_disk_bergman(cfg, ctx):
    import numpy as np
    import cflab.measures_quadrature as mq
    import cflab.kerzman_stein as ks
    dom = ctx["domain"]
    na, nl = cfg.resolutions[0] if cfg.resolutions else (1536, 14)
    g = mq.build_interior_grid(dom, na, nl)
    cp = ks.circulant_projection(ks.circulant_symbol("bergman_main", dom, g))
    z = g.nodes[:, 0]
    failures, metrics = [], {}
    worst = 0.0
    for k in range(9):
        worst = max(worst, _rel_l2(g, cp.apply(z ** k), z ** k))
    metrics["monomial_residual"] = worst
    metrics["nodes"] = g.size
    if g.size < 8000:
        failures.append("bergman-grid-size")
    if worst > 1e-2:
        failures.append("bergman-monomial-reproduction")
    ann = _rel_l2(g, cp.apply(np.conj(z)), np.zeros_like(z))
    metrics["annihilation_residual"] = ann
    if ann > 1e-2:
        failures.append("bergman-annihilation")
    idx, kern = cp.kernel_rows()
    prod = kern * np.pi * (1.0 - z[idx][:, None] * np.conj(z)[None, :]) ** 2
    dev = float(np.abs(prod - 1.0).max())
    metrics["kernel_constancy_dev"] = dev
    if dev > 1e-2:
        failures.append("bergman-kernel-constancy")
    return failures, metrics, None


@_check("ball_monomials")
def check_ball_monomials(cfg, ctx):
    import numpy as np
    import cflab.measures_quadrature as mq
    import cflab.operators as op
    import cflab.kerzman_stein as ks
    dom = ctx["domain"]
    rng = np.random.default_rng(cfg.seed)
    Z = rng.standard_normal((20, 2)) + 1j * rng.standard_normal((20, 2))
    Z *= (0.45 * rng.uniform(0.3, 1, 20) / np.linalg.norm(Z, axis=1))[:, None]
    mons = [(a, b) for a in range(4) for b in range(4) if 0 < a + b <= 3]
    mons += [(0, 0)]
    failures, metrics, rows = [], {}, []
    residuals = []
    last_grid = None
    for npd in cfg.resolutions:
        g = mq.build_boundary_grid(dom, npd)
        CF = op.build_c_sharp(dom, g, targets=Z)
        errs = []
        for a, b in mons:
            f = g.nodes[:, 0] ** a * g.nodes[:, 1] ** b
            ex = Z[:, 0] ** a * Z[:, 1] ** b
            errs.append(np.linalg.norm(CF.apply(f) - ex)
                        / max(np.linalg.norm(ex), 1e-30))
        residuals.append(max(errs))
        rows.append((npd, g.size, float(max(errs))))
        last_grid = g
    metrics["monomial_residuals"] = residuals
    if not all(b < a for a, b in zip(residuals, residuals[1:])):
        failures.append("monomial-residual-monotone")
    amax = ks.streamed_skew_kernel_max(dom, last_grid, block=512)
    metrics["skew_kernel_max"] = float(amax)
    if amax > 1e-9:
        failures.append("ball-skew-max")
    if ctx.get("dump"):
        op.dump_matrix(op.build_c_sharp(
            dom, mq.build_boundary_grid(dom, cfg.resolutions[0]), targets=Z),
            os.path.join(cfg.out, "ball-monomials-base.txt"))
    return failures, metrics, ("npd,nodes,max_residual", rows)


@_check("metric_scaling")
def check_metric_scaling(cfg, ctx):
    import numpy as np
    import cflab.domain_geometry as dm
    import cflab.measures_quadrature as mq
    import cflab.quasi_metric as qm
    failures, metrics, rows = [], {}, []
    d1, d2 = dm.unit_ball(1), dm.unit_ball(2)
    cases = [
        ("boundary-n1", d1, mq.build_boundary_grid(d1, 32768),
         qm.BOUNDARY_TAG, (0.02, 0.2), 2.0),
        ("interior-n1", d1, mq.build_interior_grid(d1, 512, 24),
         qm.INTERIOR_TAG, (0.02, 0.2), 2.0),
        ("boundary-n2", d2, mq.build_boundary_grid(d2, 132),
         qm.BOUNDARY_TAG, (0.07, 0.7), 4.0),
        ("interior-n2", d2, mq.build_interior_grid(d2, 56, 18),
         qm.INTERIOR_TAG, (0.02, 0.2), 3.0),
    ]
    for label, dom, grid, tag, (lo, hi), target in cases:
        if tag == qm.BOUNDARY_TAG:
            C = dm.random_boundary_points(dom, 200, np.random.default_rng(cfg.seed))
        else:
            C = qm.near_boundary_probes(dom, 256 if dom.n == 2 else 200,
                                        seed=cfg.seed)
        slope = qm.volume_slope(grid, tag, lo, hi, centers=C)
        metrics[f"slope_{label}"] = float(slope)
        rows.append((label, float(target), float(slope)))
        if abs(slope - target) > 0.15:
            failures.append(f"metric-slope-{label}")
    return failures, metrics, ("case,target,slope", rows)


@_check("symmetry_defect")
def check_symmetry_defect(cfg, ctx):
    import cflab.domain_geometry as dm
    import cflab.kerzman_stein as ks
    failures, metrics = [], {}
    rep = ks.symmetry_defect_fit(ctx["domain"], n_pairs=600, seed=cfg.seed)
    metrics["sup_defect"] = rep.sup_defect
    if rep.exact_symmetry and rep.sup_defect < 1e-15:
        metrics["certified_zero"] = True
    else:
        metrics["certified_zero"] = False
        metrics["slope"] = rep.slope
        if rep.slope < 2.7:
            failures.append("symmetry-exponent")
    # genuine cubic witnesses where the defect is not identically zero
    for dom in (dm.perturbed_ball(1, amplitude=0.15, frequency=3),
                dm.perturbed_ball(2, amplitude=0.15, frequency=3)):
        slopes = []
        for seed in (cfg.seed, cfg.seed + 1):
            r = ks.symmetry_defect_fit(dom, n_pairs=600, seed=seed)
            if r.exact_symmetry:
                failures.append("symmetry-witness-degenerate")
                break
            slopes.append(r.slope)
        else:
            metrics[f"witness_slopes_n{dom.n}"] = slopes
            if min(slopes) < 2.7:
                failures.append("symmetry-witness-slope")
            if abs(slopes[0] - slopes[1]) > 0.1:
                failures.append("symmetry-seed-stability")
    return failures, metrics, None


@_check("skew_decay")
def check_skew_decay(cfg, ctx):
    import cflab.domain_geometry as dm
    import cflab.measures_quadrature as mq
    import cflab.operators as op
    import cflab.kerzman_stein as ks
    failures, metrics, rows = [], {}, []
    ell = dm.ellipsoid((1.0, 2.0))
    sups = []
    for npd in (12, 16):
        b = mq.build_boundary_grid(ell, npd)
        rep = ks.skew_size_check(ks.skew_part(op.build_c_sharp(ell, b)))
        sups.append(rep.sup_normalized)
        rows.append(("ellipsoid-boundary", npd, rep.sup_normalized, rep.slope))
        if rep.slope < -(2 * ell.n - 1) - 0.3:
            failures.append("skew-slope-boundary")
    metrics["boundary_sups"] = sups
    if max(sups) > 1.5 * min(sups):
        failures.append("skew-sup-stability-boundary")
    pb2 = dm.perturbed_ball(2, amplitude=0.15, frequency=3)
    sups = []
    for na, nl in ((10, 7), (12, 8)):
        g = mq.build_interior_grid(pb2, na, nl)
        rep = ks.skew_size_check(ks.skew_part(op.build_bergman_main(pb2, g)))
        sups.append(rep.sup_boundary_normalized)
        rows.append(("perturbed-interior", na, rep.sup_boundary_normalized,
                     rep.slope))
        if rep.slope < -(pb2.n + 0.5) - 0.3:
            failures.append("skew-slope-interior")
    metrics["interior_sups"] = sups
    if max(sups) > 1.5 * min(sups):
        failures.append("skew-sup-stability-interior")
    ball = dm.unit_ball(2)
    bb = mq.build_boundary_grid(ball, 8)
    rep = ks.skew_size_check(ks.skew_part(op.build_c_sharp(ball, bb)))
    if not rep.degenerate_zero:
        failures.append("skew-ball-degenerate")
    return failures, metrics, ("case,resolution,sup_normalized,slope", rows)


@_check("weighted_sweep")
def check_weighted_sweep(cfg, ctx):
    import numpy as np
    import cflab.measures_quadrature as mq
    import cflab.weights as wt
    import cflab.kerzman_stein as ks
    dom = ctx["domain"]
    ts = cfg.t_values or [-1.5, -1.0, 0.0, 1.0, 1.5, 2.5]
    p = cfg.p_values[0]
    failures, metrics, rows = [], {}, []
    values = {}
    for N in cfg.resolutions:
        b = mq.build_boundary_grid(dom, N)
        z0 = wt.midpoint_base_point(b)
        cp = ks.circulant_projection(
            ks.circulant_symbol("cauchy_fantappie", dom, b))
        for t in ts:
            sig = wt.boundary_power_weight(b, z0, t)
            ap = wt.muckenhoupt_constant(b, sig, p, wt.BOUNDARY_MODE).value
            nrm = cp.weighted_norm(sig)
            values[(N, t)] = (ap, nrm)
            rows.append((float(t), float(p), N, float(ap), float(nrm)))
        if N == min(cfg.resolutions):
            th = np.angle(b.nodes[:, 0])
            order = np.argsort(th)
            for t in (1.0, 1.5, 2.5):
                if t not in ts:
                    continue
                sig = wt.boundary_power_weight(b, z0, t)
                arc = _arc_oracle(th[order], sig.values[order], p)
                ratio = values[(N, t)][0] / arc
                metrics[f"arc_ratio_t{t}"] = float(ratio)
                if abs(ratio - 1.0) > 0.1:
                    failures.append(f"arc-crosscheck-t{t}")
    lo, hi = min(cfg.resolutions), max(cfg.resolutions)
    for t in ts:
        ra = values[(hi, t)][0] / values[(lo, t)][0]
        rn = values[(hi, t)][1] / values[(lo, t)][1]
        metrics[f"ap_ratio_t{t}"] = float(ra)
        metrics[f"norm_ratio_t{t}"] = float(rn)
        if abs(t) < 2.0:
            if ra > 1.2:
                failures.append(f"ap-stability-t{t}")
            if rn > 1.2:
                failures.append(f"norm-stability-t{t}")
        else:
            if ra < 2.0:
                failures.append(f"ap-growth-t{t}")
            if rn < 2.0:
                failures.append(f"norm-growth-t{t}")
    return failures, metrics, ("t,p,resolution,ap_estimate,norm_estimate", rows)


@_check("resolvent")
def check_resolvent(cfg, ctx):
    import numpy as np
    import cflab.domain_geometry as dm
    import cflab.measures_quadrature as mq
    import cflab.operators as op
    import cflab.kerzman_stein as ks
    failures, metrics = [], {}
    rng = np.random.default_rng(cfg.seed)

    pb2 = dm.perturbed_ball(2, amplitude=0.15, frequency=3)
    ell = dm.ellipsoid((1.0, 2.0))
    cases = [
        ("perturbed-interior",
         ks.skew_part(op.build_bergman_main(pb2, mq.build_interior_grid(pb2, 10, 6)))),
        ("ellipsoid-boundary",
         ks.skew_part(op.build_c_sharp(ell, mq.build_boundary_grid(ell, 12)))),
    ]
    full_range_seen = False
    for label, S in cases:
        z = S.grid.nodes[:, 0]
        b = np.exp(z) + 0.3 * rng.standard_normal(S.grid.size)
        direct = ks.resolvent_solve(S, b, method="direct")
        metrics[f"nu_{label}"] = direct.nu
        metrics[f"residual_{label}"] = direct.residual
        if direct.residual > 1e-10 * np.linalg.norm(b):
            failures.append(f"direct-residual-{label}")
        if direct.nu >= 1.0:
            failures.append(f"contraction-{label}")
            continue
        rec = ks.resolvent_solve(S, b, method="neumann", max_terms=30)
        floor = 64 * np.finfo(float).eps * np.linalg.norm(b)
        checked = 0
        for err, bound in zip(rec.history, rec.bounds):
            if bound < floor:
                break  # bound below double precision; comparison undefined
            checked += 1
            if err > bound:
                failures.append(f"neumann-bound-{label}")
                break
        metrics[f"neumann_terms_checked_{label}"] = checked
        if checked == len(rec.history):
            full_range_seen = True
    if not full_range_seen:
        failures.append("neumann-full-range")

    H = rng.standard_normal((60, 60)) + 1j * rng.standard_normal((60, 60))
    H = 0.5 * (H + np.conj(H.T))
    H *= 0.5 / np.max(np.abs(np.linalg.eigvalsh(H)))
    bv = rng.standard_normal(60) + 1j * rng.standard_normal(60)
    rec = ks.resolvent_solve(1j * H, bv, method="neumann", max_terms=30)
    hist = np.array(rec.history)
    ratio = float((hist[1:] / hist[:-1])[-10:].mean())
    metrics["synthetic_ratio"] = ratio
    if abs(ratio - 0.5) > 0.05 or not rec.bound_satisfied():
        failures.append("synthetic-geometric-ratio")
    return failures, metrics, None


@_check("improvement")
def check_improvement(cfg, ctx):
    import cflab.domain_geometry as dm
    import cflab.measures_quadrature as mq
    import cflab.operators as op
    import cflab.kerzman_stein as ks
    failures, metrics, rows = [], {}, []
    dom = ctx["domain"]
    p, eps = cfg.p_values[0], cfg.eps
    ratios = []
    for N in cfg.resolutions:
        b = mq.build_boundary_grid(dom, N)
        S = ks.skew_part(op.build_cauchy_fantappie(dom, b))
        rep = ks.improvement_check(S, p=p, eps=eps, seed=cfg.seed)
        ratios.append(rep.max_ratio)
        rows.append((N, float(rep.max_ratio)))
    metrics["ratios"] = ratios
    if max(ratios) > 1.3 * ratios[0]:
        failures.append("improvement-ratio-drift")
    disk = dm.unit_ball(1)
    b = mq.build_boundary_grid(disk, cfg.resolutions[1])
    S0 = ks.skew_part(op.build_cauchy_fantappie(disk, b))
    rep0 = ks.improvement_check(S0, p=p, eps=eps, seed=cfg.seed)
    metrics["disk_ratio"] = rep0.max_ratio
    if rep0.max_ratio > 1e-12:
        failures.append("improvement-disk-degenerate")
    return failures, metrics, ("resolution,max_ratio", rows)


@_check("double_norm")
def check_double_norm(cfg, ctx):
    import cflab.domain_geometry as dm
    import cflab.measures_quadrature as mq
    import cflab.operators as op
    import cflab.weights as wt
    import cflab.kerzman_stein as ks
    failures, metrics, rows = [], {}, []
    dom = ctx["domain"]
    p = cfg.p_values[0]
    skews, fulls = [], []
    for N in cfg.resolutions:
        b = mq.build_boundary_grid(dom, N)
        K = op.build_cauchy_fantappie(dom, b)
        S = ks.skew_part(K)
        sig = wt.constant_weight(b)
        sk = ks.double_norm(S.entry_kernel(), sig, p, grid=b)
        fl = ks.double_norm(K, sig, p)
        skews.append(sk)
        fulls.append(fl)
        rows.append((N, float(sk), float(fl)))
    metrics["skew_double_norms"] = skews
    metrics["full_double_norms"] = fulls
    if max(skews) > 1.5 * min(skews):
        failures.append("double-norm-skew-stability")
    if not all(b > a for a, b in zip(fulls, fulls[1:])):
        failures.append("double-norm-full-growth")
    ell = dm.ellipsoid((1.0, 2.0))
    esk = []
    for npd in (8, 12):
        b = mq.build_boundary_grid(ell, npd)
        S = ks.skew_part(op.build_c_sharp(ell, b))
        esk.append(ks.double_norm(S.entry_kernel(), wt.constant_weight(b),
                                  p, grid=b))
    metrics["ellipsoid_skew_double_norms"] = esk
    if max(esk) > 1.5 * min(esk):
        failures.append("double-norm-ellipsoid-skew-stability")
    return failures, metrics, ("resolution,skew_double_norm,full_double_norm", rows)


def _arc_oracle(theta, weight_vals, p, n_arcs=400):
    """Brute-force A_p over centered arcs (classical cross-check)."""
    import numpy as np
    N = theta.size
    best = 0.0
    widths = np.unique(np.clip(
        np.round(np.geomspace(1, N // 2, n_arcs)).astype(int), 1, N // 2))
    w = np.asarray(weight_vals, dtype=float)
    wq = w ** (-1.0 / (p - 1.0))
    cw = np.concatenate([[0.0], np.cumsum(np.tile(w, 2))])
    cq = np.concatenate([[0.0], np.cumsum(np.tile(wq, 2))])
    for half in widths:
        L = 2 * half + 1
        for start in range(N):
            mean_w = (cw[start + L] - cw[start]) / L
            mean_q = (cq[start + L] - cq[start]) / L
            val = mean_w * mean_q ** (p - 1.0)
            if val > best:
                best = val
    return best


# ---------------------------------------------------------------------------
# commands


def run(cfg: ExperimentConfig, dump_matrices: bool = False) -> int:
    if cfg.check not in CHECKS:
        print(f"CONFIG-ERROR: unknown check {cfg.check!r}")
        return 2
    dom = build_domain(cfg)
    report = {"check": cfg.check, "domain": dom.label(), "seed": cfg.seed,
              "config": cfg.config_hash, "passed": False, "failures": [],
              "metrics": {}}
    if dom.kind == "perturbed_ball":
        import cflab.domain_geometry as dm
        co = dm.verify_coercivity(dom, samples=2000)
        if co.failed:
            report["failures"] = ["FAILED-COERCIVITY"]
            _write_report(cfg, report)
            print(f"FAILED: FAILED-COERCIVITY ({dom.label()}, "
                  f"kappa_boundary={co.kappa_boundary:.4f})")
            return 1
    os.makedirs(cfg.out, exist_ok=True)
    ctx = {"domain": dom, "dump": dump_matrices}
    failures, metrics, csv_out = CHECKS[cfg.check](cfg, ctx)
    report["failures"] = failures
    report["metrics"] = metrics
    report["passed"] = not failures
    _write_report(cfg, report)
    if csv_out is not None:
        header, rows = csv_out
        _write_csv(os.path.join(cfg.out, f"{cfg.check}.csv"), cfg,
                   header.split(","), rows)
    if failures:
        print(f"FAILED: {failures[0]}" + (f" (+{len(failures)-1} more)"
                                          if len(failures) > 1 else ""))
        return 1
    print(f"PASS: {cfg.check}")
    return 0


def sweep(cfg: ExperimentConfig) -> int:
    import cflab.measures_quadrature as mq
    import cflab.operators as op
    import cflab.weights as wt
    import cflab.kerzman_stein as ks
    if not cfg.t_values:
        print("CONFIG-ERROR: sweep needs [sweep] t values")
        return 2
    dom = build_domain(cfg)
    circulant = dom.kind == "ball" and dom.n == 1
    rows = []
    for N in cfg.resolutions:
        b = mq.build_boundary_grid(dom, N)
        z0 = wt.midpoint_base_point(b)
        if circulant:
            cp = ks.circulant_projection(
                ks.circulant_symbol("cauchy_fantappie", dom, b))
        else:
            P = ks.reconstruct_projection(
                op.build_cauchy_fantappie(dom, b))
        for p in cfg.p_values:
            for t in cfg.t_values:
                sig = wt.boundary_power_weight(b, z0, t)
                ap = wt.muckenhoupt_constant(b, sig, p, wt.BOUNDARY_MODE).value
                if circulant:
                    nrm = cp.weighted_norm(sig)
                else:
                    nrm = ks.weighted_operator_norm(P, sig, p).value
                rows.append((float(t), float(p), N, float(ap), float(nrm)))
    os.makedirs(cfg.out, exist_ok=True)
    _write_csv(os.path.join(cfg.out, "sweep.csv"), cfg,
               ["t", "p", "resolution", "ap_estimate", "norm_estimate"], rows)
    print(f"wrote {len(rows)} rows")
    return 0


# ---------------------------------------------------------------------------
# validate: fast invariant suite


def _validators(inject_fault=None):
    import numpy as np
    import cflab.domain_geometry as dm
    import cflab.measures_quadrature as mq
    import cflab.quasi_metric as qm
    import cflab.weights as wt
    import cflab.operators as op
    import cflab.kerzman_stein as ks

    disk = dm.unit_ball(1)
    ball = dm.unit_ball(2)
    ell = dm.ellipsoid((1.0, 2.0))
    pd1 = dm.perturbed_ball(1, amplitude=0.15, frequency=3)

    def v_symmetry():
        rng = np.random.default_rng(0)
        W = dm.random_boundary_points(ball, 50, rng)
        Z = dm.random_boundary_points(ball, 50, rng)
        G = dm.pairwise_g_boundary(ball, W, Z)
        H = dm.pairwise_g_boundary(ball, Z, W)
        assert np.abs(G - np.conj(H.T)).max() < 1e-13

    def v_coercivity():
        rep = dm.verify_coercivity(pd1, samples=500)
        assert not rep.failed and rep.kappa_boundary > 0

    def v_radius():
        rng = np.random.default_rng(1)
        P = dm.random_boundary_points(pd1, 100, rng)
        assert np.abs(dm.rho(pd1, P)).max() < 1e-12

    def v_surface_area():
        b = mq.build_boundary_grid(disk, 64)
        assert abs(b.weights.sum() - 2 * np.pi) < 1e-10
        b2 = mq.build_boundary_grid(ball, 8)
        assert abs(b2.weights.sum() - 2 * np.pi ** 2) < 1e-8

    def v_volume():
        g = mq.build_interior_grid(disk, 64, 8)
        assert abs(g.weights.sum() - np.pi) < 0.01 * np.pi

    def v_leray_levi():
        b = mq.build_boundary_grid(disk, 64)
        lam = b.leray_levi.copy()
        if inject_fault == "leray_levi":
            lam *= 1.01
        assert np.abs(lam - 1.0 / (2 * np.pi)).max() < 1e-12
        b2 = mq.build_boundary_grid(ball, 6)
        assert np.abs(b2.leray_levi - 1.0 / (8 * np.pi ** 2)).max() < 1e-12

    def v_quasi_triangle():
        b = mq.build_boundary_grid(disk, 512)
        rep = qm.structure_constants(b, qm.BOUNDARY_TAG, (0.15, 0.5),
                                     n_samples=500, seed=0)
        assert 0.8 < rep.A0 <= 1.0 + 1e-9

    def v_volume_slope():
        b = mq.build_boundary_grid(disk, 4096)
        s = qm.volume_slope(b, qm.BOUNDARY_TAG, 0.05, 0.5, n_centers=50, seed=0)
        assert abs(s - 2.0) < 0.3

    def v_constant_ap():
        b = mq.build_boundary_grid(disk, 64)
        rep = wt.muckenhoupt_constant(b, wt.constant_weight(b), 2.0,
                                      wt.BOUNDARY_MODE)
        assert abs(rep.value - 1.0) < 1e-12

    def v_power_weight_class():
        b = mq.build_boundary_grid(disk, 512)
        z0 = wt.midpoint_base_point(b)
        a1 = wt.muckenhoupt_constant(b, wt.boundary_power_weight(b, z0, 1.0),
                                     2.0, wt.BOUNDARY_MODE).value
        a25 = wt.muckenhoupt_constant(b, wt.boundary_power_weight(b, z0, 2.5),
                                      2.0, wt.BOUNDARY_MODE).value
        assert 1.0 < a1 < 2.0 < a25

    def v_disk_szego_kernel():
        b = mq.build_boundary_grid(disk, 64)
        C = op.build_c_sharp(disk, b)
        z = b.nodes[:, 0]
        den = 1.0 - z[:, None] * np.conj(z)[None, :]
        np.fill_diagonal(den, 1.0)
        S = 1.0 / (2 * np.pi * den)
        np.fill_diagonal(S, 0.0)
        got = C.folded_kernel().copy()
        np.fill_diagonal(got, 0.0)
        assert np.abs(got - S).max() < 1e-10 * np.abs(S).max()

    def v_ball_cf_consistency():
        b = mq.build_boundary_grid(ball, 6)
        t = dm.random_boundary_points(ball, 5, np.random.default_rng(2)) * 0.4
        K1 = op.build_c_sharp(ball, b, targets=t)
        K2 = op.build_cauchy_fantappie(ball, b, targets=t)
        assert np.abs(K2.kernel - K1.folded_kernel()).max() \
            < 1e-12 * np.abs(K2.kernel).max()

    def v_disk_skew_vanishes():
        b = mq.build_boundary_grid(disk, 64)
        S = ks.skew_part(op.build_cauchy_fantappie(disk, b))
        assert np.abs(S.A).max() < 1e-12

    def v_skew_adjointness():
        b = mq.build_boundary_grid(ell, 8)
        S = ks.skew_part(op.build_c_sharp(ell, b))
        wa = 1j * b.weights[:, None] * S.A
        assert np.abs(wa - np.conj(wa.T)).max() < 1e-10 * np.abs(wa).max()

    def v_synthetic_resolvent():
        rng = np.random.default_rng(11)
        H = rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40))
        H = 0.5 * (H + np.conj(H.T))
        H *= 0.5 / np.max(np.abs(np.linalg.eigvalsh(H)))
        bv = rng.standard_normal(40) + 1j * rng.standard_normal(40)
        rec = ks.resolvent_solve(1j * H, bv, method="neumann", max_terms=20)
        assert rec.bound_satisfied()

    return [
        ("domain_geometry", "conjugate_symmetry_ball", v_symmetry),
        ("domain_geometry", "coercivity_perturbed", v_coercivity),
        ("domain_geometry", "boundary_radius", v_radius),
        ("measures_quadrature", "surface_area", v_surface_area),
        ("measures_quadrature", "interior_volume", v_volume),
        ("measures_quadrature", "leray_levi_reference", v_leray_levi),
        ("quasi_metric", "quasi_triangle_constant", v_quasi_triangle),
        ("quasi_metric", "volume_slope_disk", v_volume_slope),
        ("weights", "constant_ap_is_one", v_constant_ap),
        ("weights", "power_weight_ordering", v_power_weight_class),
        ("operators", "disk_szego_closed_form", v_disk_szego_kernel),
        ("operators", "ball_cf_equals_c_sharp", v_ball_cf_consistency),
        ("kerzman_stein", "disk_skew_vanishes", v_disk_skew_vanishes),
        ("kerzman_stein", "skew_adjointness_ellipsoid", v_skew_adjointness),
        ("kerzman_stein", "synthetic_resolvent_bound", v_synthetic_resolvent),
    ]


def validate(inject_fault: str | None = None) -> int:
    counts: dict = {}
    first_failure = None
    for module, name, fn in _validators(inject_fault=inject_fault):
        ok = True
        try:
            fn()
        except AssertionError:
            ok = False
        passed, total = counts.get(module, (0, 0))
        counts[module] = (passed + ok, total + 1)
        if not ok and first_failure is None:
            first_failure = f"{module}.{name}"
    for module, (passed, total) in counts.items():
        print(f"{module}: {passed}/{total} passed")
    if first_failure is not None:
        print(f"FAILED: {first_failure}")
        return 1
    print("all invariants pass")
    return 0


# ---------------------------------------------------------------------------
# entry point


def bundled_config(name: str) -> str:
    """Path of a packaged config file (e.g. 'disk-szego.cfg')."""
    return os.path.join(os.path.dirname(__file__), "configs", name)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cflab", description=__doc__)
    ap.add_argument("command", choices=["run", "sweep", "validate"])
    ap.add_argument("config", nargs="?", help="config file (run/sweep)")
    ap.add_argument("--out", help="override output directory")
    ap.add_argument("--threads", type=int,
                    help="BLAS/OpenMP thread cap (set before numpy loads)")
    ap.add_argument("--dump-matrices", action="store_true",
                    help="also write dense kernel matrices")
    ap.add_argument("--inject-fault", default=None, metavar="NAME",
                    help="validate-only test hook (corrupts the named input)")
    args = ap.parse_args(argv)

    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))

    if args.command == "validate":
        return validate(inject_fault=args.inject_fault)

    if not args.config:
        print("CONFIG-ERROR: run/sweep need a config file")
        return 2
    try:
        cfg = parse_config(args.config)
        if args.out:
            cfg.out = args.out
        if args.command == "run":
            return run(cfg, dump_matrices=args.dump_matrices)
        return sweep(cfg)
    except ConfigError as e:
        print(f"CONFIG-ERROR: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
