"""Verification studies, one per CLI subcommand.

Each study reads its parameters from a :class:`RunConfig` (physics and
discretization sections plus free-form ``[study]``/``[thresholds]`` keys with
the defaults below) and returns a :class:`StudyReport`.  Seed-level work is
fanned out with :func:`pmap`; results are merged in seed order so reports do
not depend on the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig, parse_levels, parse_seeds
from .malliavin import chain_rule, noise_shift_oracle, shift_pairing
from .operators import BHatWorkspace, a_hat_symbol, b_hat_direct_coeffs
from .report import Check, StudyReport, fit_slope, fmt
from .solver import InitSpec, assemble_u, energy_residual, energy_terms, invert_u, make_xi, solve_v
from .spectral import (
    SpectralField,
    build_basis,
    field_to_csv,
    norm_V,
    norm_W,
    random_field,
    v_weight,
    w_weight,
    wavenumbers,
)
from .stochint import PRODUCT_CATALOG, definition_residual, nabla_of_product, product_rule_residuals
from .wiener import omega_N_indicator, q_of, sample_path, synthetic_path

__all__ = ["STUDIES", "DEFAULTS", "LEVEL_KEYS", "pmap", "run_study"]

DEFAULTS = {
    # basis-check
    "basis_samples": 1000,
    "basis_alphas": "0.5,1,2",
    "eigen_tol": 1e-12,
    # operator-check
    "op_samples": 1000,
    "op_tol": 1e-10,
    "direct_n_max": 6,
    "direct_samples": 10,
    "field_decay": 0.5,
    # energy
    "synthetic_levels": "50,100,200,400",
    "ratio_min": 3.2,
    "ratio_max": 4.8,
    "brownian_levels": "64,128,256,512",
    "order_min": 0.4,
    "bound_levels": "100,200",
    "bound_inits": 3,
    "bound_growth_max": 1.05,
    # converge-galerkin
    "galerkin_levels": "4,8,16",
    "galerkin_decay": 1.5,
    "galerkin_amplitude": 1.0,
    "galerkin_drop_min": 10.0,
    # malliavin-fd / chain-rule
    "fd_dt": "0.004,0.001",
    "fd_eps": "1e-3,1e-4",
    "fd_r0": 0.256,
    "fd_t_min": 0.5,
    "fd_rel_tol": 1e-2,
    # product-rule
    "pr_levels": "64,128,256,512",
    "pr_seeds": "0-999",
    "nabla_tol": 1e-12,
    # theorem-residual
    "tr_levels": "64,128,256",
    "roundtrip_tol": 1e-13,
    # simulate
    "snapshots": "",
    "closed_form_tol": 1e-10,
}

LEVEL_KEYS = {
    "energy": "brownian_levels",
    "converge-galerkin": "galerkin_levels",
    "malliavin-fd": "fd_dt",
    "chain-rule": "fd_dt",
    "product-rule": "pr_levels",
    "theorem-residual": "tr_levels",
}


def _param(cfg: RunConfig, key: str):
    if key not in DEFAULTS:
        raise KeyError(key)
    return cfg.study.get(key, DEFAULTS[key])


def _levels(cfg: RunConfig, key: str, cast=int):
    return tuple(cast(x) for x in parse_levels(str(_param(cfg, key))))


def pmap(fn, items, threads: int = 1):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def _snapshot(cfg: RunConfig, study: str, keys=()) -> dict:
    snap = cfg.snapshot()
    for k in keys:
        snap[f"param.{k}"] = _param(cfg, k)
    snap["study"] = study
    return snap


def _qpath(cfg: RunConfig, seed: int, M: int):
    if cfg.path_kind == "synthetic":
        path = synthetic_path(M, cfg.T)
    else:
        path = sample_path(seed, M, cfg.T)
    return q_of(path, cfg.sigma, cfg.N)


# -- basis-check -----------------------------------------------------------


def study_basis(cfg: RunConfig, threads: int = 1) -> StudyReport:
    samples = int(_param(cfg, "basis_samples"))
    tol = float(_param(cfg, "eigen_tol"))
    n = cfg.n
    rep = StudyReport(
        "basis-check",
        _snapshot(cfg, "basis-check", ("basis_samples", "basis_alphas", "eigen_tol")),
        ["alpha", "modes", "max_eigen_residual", "w_orthonormality", "v_orthogonality", "sorted", "seeds"],
    )
    rng = np.random.default_rng(cfg.seeds[0])
    U = np.stack([random_field(rng, n, 0.5).coeffs for _ in range(samples)]).reshape(samples, -1)
    for alpha in parse_levels(str(_param(cfg, "basis_alphas"))):
        basis = build_basis(n, alpha)
        E = np.stack([b.field.coeffs for b in basis]).reshape(len(basis), -1)
        lam = np.array([b.lam for b in basis])
        ww = w_weight(n, alpha).ravel()
        vw = v_weight(n, alpha).ravel()
        GW = np.real((U * ww) @ E.conj().T)
        GV = np.real((U * vw) @ E.conj().T)
        unorm = np.sqrt(np.sum(ww * np.abs(U) ** 2, axis=1))
        resid = float(np.max(np.abs(GW - lam * GV) / unorm[:, None]))
        gram_w = np.real((E * ww) @ E.conj().T)
        gram_v = np.real((E * vw) @ E.conj().T)
        ortho_w = float(np.max(np.abs(gram_w - np.eye(len(basis)))))
        sl = np.sqrt(lam)
        ortho_v = float(np.max(np.abs(sl[:, None] * gram_v * sl[None, :] - np.eye(len(basis)))))
        ordered = bool(np.all(np.diff(lam) >= 0))
        rep.add_row(
            alpha=alpha, modes=len(basis), max_eigen_residual=resid, w_orthonormality=ortho_w,
            v_orthogonality=ortho_v, sorted=ordered, seeds=samples,
        )
        rep.checks.append(Check.at_most(f"eigenrelation alpha={fmt(alpha)}", resid, tol, "relative to |u|_W"))
        rep.checks.append(Check.at_most(f"W-orthonormality alpha={fmt(alpha)}", ortho_w, tol))
        rep.checks.append(Check.at_most(f"V-orthogonality alpha={fmt(alpha)}", ortho_v, tol, "sqrt(lam_i lam_j) (e_i, e_j)_V vs identity"))
        rep.checks.append(Check("eigenvalues ascending alpha=" + fmt(alpha), float(ordered), 1.0, ">=", ordered))
    return rep


# -- operator-check --------------------------------------------------------


def _vin(a, b, w):
    return np.real(np.sum(w * a * np.conj(b), axis=(-2, -1)))


def study_operators(cfg: RunConfig, threads: int = 1) -> StudyReport:
    samples = int(_param(cfg, "op_samples"))
    tol = float(_param(cfg, "op_tol"))
    decay = float(_param(cfg, "field_decay"))
    n, alpha = cfg.n, cfg.alpha
    rep = StudyReport(
        "operator-check",
        _snapshot(cfg, "operator-check", ("op_samples", "op_tol", "direct_n_max", "direct_samples", "field_decay")),
        ["metric", "n", "value", "threshold", "seeds"],
    )
    rng = np.random.default_rng(cfg.seeds[0])

    def batch(m, cut):
        return np.stack([random_field(rng, cut, decay).coeffs for _ in range(m)])

    u, v, w = batch(samples, n), batch(samples, n), batch(samples, n)
    ws = BHatWorkspace(n, alpha, cfg.grid)
    vw, ww = v_weight(n, alpha), w_weight(n, alpha)
    nu_W = np.sqrt(np.sum(ww * np.abs(u) ** 2, axis=(-2, -1)))
    nv_V = np.sqrt(np.sum(vw * np.abs(v) ** 2, axis=(-2, -1)))
    nw_V = np.sqrt(np.sum(vw * np.abs(w) ** 2, axis=(-2, -1)))
    buv = ws.b_hat(u, v)
    buw = ws.b_hat(u, w)
    buu = ws.b_hat(u, u)

    annih = np.max(np.abs(_vin(buv, v, vw)) / (nu_W * nv_V**2))
    anti = np.max(np.abs(_vin(buv, w, vw) + _vin(buw, v, vw)) / (nu_W * nv_V * nw_V))
    nbuu_W = np.sqrt(np.sum(ww * np.abs(buu) ** 2, axis=(-2, -1)))
    wcancel = np.max(np.abs(_vin(buu, u, ww)) / (nbuu_W * nu_W))
    ksq = wavenumbers(n)[2]
    inv_ksq = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    wstar = np.sqrt(np.sum(inv_ksq * np.abs(buv) ** 2, axis=(-2, -1)))
    c_emp = float(np.max(wstar / (nu_W * nv_V)))
    # (A_hat u, v)_V = ((u, v))
    ah = a_hat_symbol(n, alpha) * u
    lhs = _vin(ah, v, vw)
    rhs = _vin(u, v, ksq)
    nu_H1 = np.sqrt(np.sum(ksq * np.abs(u) ** 2, axis=(-2, -1)))
    nv_H1 = np.sqrt(np.sum(ksq * np.abs(v) ** 2, axis=(-2, -1)))
    a_ident = float(np.max(np.abs(lhs - rhs) / (nu_H1 * nv_H1)))

    for name, val, thr, what in (
        ("annihilation", annih, tol, "|<B(u,v),v>_V| / (|u|_W |v|_V^2)"),
        ("antisymmetry", anti, tol, "|<B(u,v),w>_V + <B(u,w),v>_V| / (|u|_W |v|_V |w|_V)"),
        ("w_cancellation", wcancel, tol, "|(B(u,u),u)_W| / (|B(u,u)|_W |u|_W)"),
        ("a_hat_identity", a_ident, 1e-12, "|(A_hat u,v)_V - ((u,v))| / (|u|_H1 |v|_H1)"),
    ):
        rep.add_row(metric=name, n=n, value=float(val), threshold=thr, seeds=samples)
        rep.checks.append(Check.at_most(name, float(val), thr, what))
    rep.add_row(metric="wstar_constant", n=n, value=c_emp, threshold=math.inf, seeds=samples)
    rep.checks.append(Check("wstar_constant finite", c_emp, math.inf, "<", math.isfinite(c_emp),
                            "max |B(u,v)|_W* / (|u|_W |v|_V)"))

    dsamp = int(_param(cfg, "direct_samples"))
    worst = 0.0
    for m in range(1, int(_param(cfg, "direct_n_max")) + 1):
        wsm = BHatWorkspace(m, alpha)
        errs = []
        for _ in range(dsamp):
            a, b = random_field(rng, m, decay).coeffs, random_field(rng, m, decay).coeffs
            direct = b_hat_direct_coeffs(a, b, m, alpha)
            trans = wsm.b_hat(a, b)
            vwm = v_weight(m, alpha)
            den = math.sqrt(np.sum(vwm * np.abs(direct) ** 2))
            errs.append(math.sqrt(np.sum(vwm * np.abs(trans - direct) ** 2)) / den if den > 0 else 0.0)
        e = float(max(errs))
        worst = max(worst, e)
        rep.add_row(metric="transform_vs_direct", n=m, value=e, threshold=tol, seeds=dsamp)
    rep.checks.append(Check.at_most(f"transform_vs_direct n<={_param(cfg, 'direct_n_max')}", worst, tol, "relative V norm"))
    return rep


# -- energy (energy equation + a priori bound) -----------------------------


def _energy_seed(args):
    cfg, seed, levels = args
    f = cfg.base_field(cfg.f0_seed)
    solver = cfg.solver()
    out = []
    for M in levels:
        qp = q_of(sample_path(seed, M, cfg.T), cfg.sigma, cfg.N)
        traj = solve_v(f, qp, solver)
        out.append(energy_residual(traj, qp, solver))
    return out


def _bound_seed(args):
    cfg, seed, levels, inits = args
    solver = cfg.solver()
    ratios = np.zeros((len(levels), inits))
    for a, M in enumerate(levels):
        qp = q_of(sample_path(seed, M, cfg.T), cfg.sigma, cfg.N)
        for b in range(inits):
            f = cfg.base_field(cfg.f0_seed + b)
            traj = solve_v(f, qp, solver)
            e = traj.norms_W(cfg.alpha) ** 2
            ratios[a, b] = np.max(e) / e[0]
    return ratios


def study_energy(cfg: RunConfig, threads: int = 1) -> StudyReport:
    keys = ("synthetic_levels", "ratio_min", "ratio_max", "brownian_levels", "order_min",
            "bound_levels", "bound_inits", "bound_growth_max")
    rep = StudyReport(
        "energy", _snapshot(cfg, "energy", keys),
        ["part", "M", "dt", "mean", "std", "max", "seeds"],
    )
    solver = cfg.solver()
    f = cfg.base_field(cfg.f0_seed)
    # synthetic smooth path: order-2 integrator check
    syn = _levels(cfg, "synthetic_levels")
    res_syn = []
    for M in syn:
        qp = q_of(synthetic_path(M, cfg.T), cfg.sigma, cfg.N)
        r = energy_residual(solve_v(f, qp, solver), qp, solver)
        res_syn.append(r)
        rep.add_row(part="synthetic", M=M, dt=cfg.T / M, mean=r, std=0.0, max=r, seeds=1)
    lo, hi = float(_param(cfg, "ratio_min")), float(_param(cfg, "ratio_max"))
    for a in range(len(syn) - 1):
        ratio = res_syn[a] / res_syn[a + 1]
        rep.checks.append(Check.within(f"synthetic residual ratio dt={fmt(cfg.T / syn[a])} -> dt/2", ratio, lo, hi))
    rep.slopes["energy.synthetic"] = fit_slope([cfg.T / M for M in syn], res_syn)

    # Brownian paths: pathwise convergence
    bro = _levels(cfg, "brownian_levels")
    per_seed = np.array(pmap(_energy_seed, [(cfg, s, bro) for s in cfg.seeds], threads))
    means = per_seed.mean(axis=0)
    for a, M in enumerate(bro):
        rep.add_row(part="brownian", M=M, dt=cfg.T / M, mean=float(means[a]), std=float(per_seed[:, a].std()),
                    max=float(per_seed[:, a].max()), seeds=len(cfg.seeds))
    slope = fit_slope([cfg.T / M for M in bro], means)
    rep.slopes["energy.brownian"] = slope
    rep.checks.append(Check.at_least("brownian energy residual order", slope, float(_param(cfg, "order_min")),
                                     f"{len(cfg.seeds)} seeds, {len(bro)} levels"))

    # a priori bound sup |v|_W^2 / |f|_W^2
    bl = _levels(cfg, "bound_levels")
    inits = int(_param(cfg, "bound_inits"))
    ratios = np.array(pmap(_bound_seed, [(cfg, s, bl, inits) for s in cfg.seeds], threads))
    maxima = ratios.max(axis=(0, 2))
    for a, M in enumerate(bl):
        rep.add_row(part="apriori_ratio", M=M, dt=cfg.T / M, mean=float(ratios[:, a].mean()),
                    std=float(ratios[:, a].std()), max=float(maxima[a]), seeds=len(cfg.seeds) * inits)
    rep.checks.append(Check("a priori constant finite", float(maxima.max()), math.inf, "<",
                            bool(np.isfinite(maxima).all()), "max of sup_t |v|_W^2 / |f|_W^2"))
    growth = float(maxima[1:].max() / maxima[0]) if len(bl) > 1 else 1.0
    rep.checks.append(Check.at_most("a priori constant growth under dt refinement", growth,
                                    float(_param(cfg, "bound_growth_max"))))
    rep.plot = {"x": "dt", "y": ["mean"], "filter": ("part", "brownian"), "xlabel": "dt",
                "ylabel": "energy residual", "guides": [0.5, 1.0, 2.0]}
    return rep


# -- converge-galerkin -----------------------------------------------------


def _galerkin_seed(args):
    cfg, seed, levels, decay, amp = args
    n_ref = 2 * max(levels)
    M_ref = 4 * cfg.M
    f = random_field(np.random.default_rng(cfg.f0_seed), n_ref, decay)
    f = f * (amp / norm_V(f, cfg.alpha))
    qp = _qpath(cfg, seed, M_ref)
    ref = solve_v(f, qp, cfg.solver(n_ref), store="final").final
    errs = []
    for n in levels:
        vn = solve_v(f, qp, cfg.solver(n), store="final").final
        errs.append(norm_W(ref - vn.padded(n_ref), cfg.alpha))
    return errs


def study_galerkin(cfg: RunConfig, threads: int = 1) -> StudyReport:
    keys = ("galerkin_levels", "galerkin_decay", "galerkin_amplitude", "galerkin_drop_min")
    levels = _levels(cfg, "galerkin_levels")
    if list(levels) != sorted(levels):
        raise ValueError("galerkin levels must be increasing")
    decay = float(_param(cfg, "galerkin_decay"))
    amp = float(_param(cfg, "galerkin_amplitude"))
    rep = StudyReport(
        "converge-galerkin", _snapshot(cfg, "converge-galerkin", keys),
        ["n", "mean_error_W", "max_error_W", "min_drop", "seeds"],
    )
    rep.config["n_ref"] = 2 * max(levels)
    rep.config["dt_ref"] = cfg.dt / 4
    errs = np.array(pmap(_galerkin_seed, [(cfg, s, levels, decay, amp) for s in cfg.seeds], threads))
    lines = ["seed,n,error_W"]
    for s, row in zip(cfg.seeds, errs):
        lines += [f"{s},{n},{fmt(float(e))}" for n, e in zip(levels, row)]
    rep.extra_csv["per_seed.csv"] = "\n".join(lines) + "\n"
    drops = errs[:, :-1] / errs[:, 1:]
    for a, n in enumerate(levels):
        rep.add_row(n=n, mean_error_W=float(errs[:, a].mean()), max_error_W=float(errs[:, a].max()),
                    min_drop=float(drops[:, a - 1].min()) if a > 0 else math.nan, seeds=len(cfg.seeds))
    monotone = bool(np.all(drops > 1.0))
    rep.checks.append(Check("error decreasing in n for every seed", float(drops.min()), 1.0, ">", monotone,
                            "min ratio between consecutive levels"))
    rep.checks.append(Check.at_least("error drop per doubling (analytic field)", float(drops.min()),
                                     float(_param(cfg, "galerkin_drop_min"))))
    rep.slopes["galerkin.n"] = fit_slope(levels, errs.mean(axis=0))
    rep.plot = {"x": "n", "y": ["mean_error_W"], "xlabel": "cutoff n", "ylabel": "|v_n(T) - v_ref(T)|_W"}
    return rep


# -- malliavin-fd / chain-rule ---------------------------------------------


def _shift_level(cfg: RunConfig, spec: InitSpec, dt: float, eps: float):
    M = int(round(cfg.T / dt))
    qp = q_of(synthetic_path(M, cfg.T), cfg.sigma, cfg.N)
    solver = cfg.solver()
    step = dt * cfg.r_stride
    r0 = math.floor(float(_param(cfg, "fd_r0")) / step + 1e-9) * step
    cr = chain_rule(spec, qp, solver, r_stride=cfg.r_stride)
    pairing = shift_pairing(cr.total, r0)
    fd = noise_shift_oracle(spec, qp, solver, r0, eps)
    t_min = float(_param(cfg, "fd_t_min")) * cfg.T
    rel, zpart, ypart = 0.0, 0.0, 0.0
    ypair = shift_pairing(cr.y_part, r0)
    for b, ti in enumerate(cr.total.t_indices):
        if ti * dt < t_min - 1e-12:
            continue
        a = SpectralField(solver.n, pairing[b])
        o = fd.state(int(ti))
        rel = max(rel, norm_V(a - o, cfg.alpha) / norm_V(o, cfg.alpha))
        zpart = max(zpart, (cfg.T - r0) * norm_V(cr.frechet.state(int(ti)), cfg.alpha))
        ypart = max(ypart, norm_V(SpectralField(solver.n, ypair[b]), cfg.alpha))
    return rel, r0, zpart, ypart


def _study_shift(cfg: RunConfig, name: str, kind: str) -> StudyReport:
    keys = ("fd_dt", "fd_eps", "fd_r0", "fd_t_min", "fd_rel_tol")
    dts = _levels(cfg, "fd_dt", float)
    epss = _levels(cfg, "fd_eps", float)
    if len(dts) != len(epss):
        raise ValueError("fd_dt and fd_eps must list the same number of levels")
    spec = cfg.init_spec(kind)
    rep = StudyReport(
        name, _snapshot(cfg, name, keys),
        ["dt", "eps", "r0", "rel_error", "frechet_term", "malliavin_term", "seeds"],
    )
    rep.config["path"] = "synthetic:sin"
    rep.config["init"] = f"{kind}:{cfg.init_g}"
    errs = []
    for dt, eps in zip(dts, epss):
        rel, r0, zp, yp = _shift_level(cfg, spec, dt, eps)
        errs.append(rel)
        rep.add_row(dt=dt, eps=eps, r0=r0, rel_error=rel, frechet_term=zp, malliavin_term=yp, seeds=1)
    rep.checks.append(Check.at_most(f"noise-shift agreement at dt={fmt(dts[-1])}, eps={fmt(epss[-1])}",
                                    errs[-1], float(_param(cfg, "fd_rel_tol")), "relative V norm"))
    if len(errs) > 1:
        dec = bool(all(errs[a + 1] < errs[a] for a in range(len(errs) - 1)))
        rep.checks.append(Check("error decreases under joint (eps, dt) refinement",
                                float(errs[-1] / errs[0]), 1.0, "<", dec))
        rep.slopes[f"{name}.dt"] = fit_slope(dts, errs)
    if kind == "endpoint_functional":
        both = bool(rep.rows[-1]["frechet_term"] > 0 and rep.rows[-1]["malliavin_term"] > 0)
        rep.checks.append(Check("both chain-rule terms active", float(both), 1.0, ">=", both))
    rep.plot = {"x": "dt", "y": ["rel_error"], "xlabel": "dt (eps refined jointly)", "ylabel": "relative error"}
    return rep


def study_malliavin_fd(cfg: RunConfig, threads: int = 1) -> StudyReport:
    return _study_shift(cfg, "malliavin-fd", "deterministic")


def study_chain_rule(cfg: RunConfig, threads: int = 1) -> StudyReport:
    return _study_shift(cfg, "chain-rule", "endpoint_functional")


# -- product-rule ----------------------------------------------------------


def _product_seed(args):
    seed, levels, T, sigma = args
    finest = sample_path(seed, max(levels), T)
    out = {}
    for ex in PRODUCT_CATALOG:
        vals = []
        for M in levels:
            res = product_rule_residuals(ex, finest.restrict(M), sigma)
            vals.append((res[-1], res[0]))
        out[ex] = vals
    return out


def study_product_rule(cfg: RunConfig, threads: int = 1) -> StudyReport:
    keys = ("pr_levels", "pr_seeds", "order_min", "nabla_tol")
    levels = _levels(cfg, "pr_levels")
    seeds = parse_seeds(str(_param(cfg, "pr_seeds")))
    sigma = cfg.sigma if cfg.sigma > 0 else 1.0
    rep = StudyReport(
        "product-rule", _snapshot(cfg, "product-rule", keys),
        ["example", "M", "dt", "l2_residual", "std", "seeds"],
    )
    per_seed = pmap(_product_seed, [(s, levels, cfg.T, sigma) for s in seeds], threads)
    order_min = float(_param(cfg, "order_min"))
    for ex in PRODUCT_CATALOG:
        arr = np.array([[v[0] for v in d[ex]] for d in per_seed])
        at0 = np.array([[v[1] for v in d[ex]] for d in per_seed])
        l2 = np.sqrt(np.mean(arr**2, axis=0))
        for a, M in enumerate(levels):
            rep.add_row(example=ex, M=M, dt=cfg.T / M, l2_residual=float(l2[a]), std=float(arr[:, a].std()),
                        seeds=len(seeds))
        slope = fit_slope([cfg.T / M for M in levels], l2)
        rep.slopes[f"product.{ex}"] = slope
        rep.checks.append(Check.at_least(f"({ex}) L2 residual order", slope, order_min))
        rep.checks.append(Check.at_most(f"({ex}) residual at t=0", float(np.max(at0)), 0.0, "exact"))
        path = sample_path(seeds[0], max(levels), cfg.T)
        lhs, rhs = nabla_of_product(ex, path, sigma)
        dev = float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(lhs))))
        rep.checks.append(Check.at_most(f"({ex}) nabla product formula", dev, float(_param(cfg, "nabla_tol"))))
    rep.plot = {"x": "dt", "y": ["l2_residual"], "filter": ("example", "W,W(T)"), "xlabel": "dt",
                "ylabel": "L2 residual (W, W(T))", "guides": [0.5]}
    return rep


# -- theorem-residual ------------------------------------------------------


def _theorem_seed(args):
    cfg, seed, levels = args
    spec = cfg.init_spec()
    solver = cfg.solver()
    finest = sample_path(seed, max(levels), cfg.T)
    inside = omega_N_indicator(finest, cfg.N)
    out = []
    for M in levels:
        qp = q_of(finest.restrict(M), cfg.sigma, cfg.N)
        out.append(definition_residual(spec, qp, solver))
    # u -> v -> u round trip on the finest level
    qp = q_of(finest, cfg.sigma, cfg.N)
    xi, _ = make_xi(spec, qp.base)
    v = solve_v(xi, qp, solver)
    u = assemble_u(v, qp)
    u2 = assemble_u(invert_u(u, qp), qp)
    rt = float(np.max(np.abs(u2.coeffs - u.coeffs)) / np.max(np.abs(u.coeffs)))
    return inside, out, rt


def study_theorem(cfg: RunConfig, threads: int = 1) -> StudyReport:
    keys = ("tr_levels", "order_min", "roundtrip_tol")
    levels = _levels(cfg, "tr_levels")
    rep = StudyReport(
        "theorem-residual", _snapshot(cfg, "theorem-residual", keys),
        ["M", "dt", "mean_residual_V", "std", "seeds"],
    )
    results = pmap(_theorem_seed, [(cfg, s, levels) for s in cfg.seeds], threads)
    kept = np.array([r[1] for r in results if r[0]])
    rep.config["paths_in_omega_N"] = f"{len(kept)}/{len(results)}"
    if kept.size == 0:
        rep.checks.append(Check.at_least("paths inside Omega_N", 0.0, 1.0))
        return rep
    means = kept.mean(axis=0)
    for a, M in enumerate(levels):
        rep.add_row(M=M, dt=cfg.T / M, mean_residual_V=float(means[a]), std=float(kept[:, a].std()), seeds=len(kept))
    slope = fit_slope([cfg.T / M for M in levels], means)
    rep.slopes["theorem.dt"] = slope
    rep.checks.append(Check.at_least("definition residual order", slope, float(_param(cfg, "order_min")),
                                     f"{len(kept)} seeds in Omega_N"))
    rt = max(r[2] for r in results)
    rep.checks.append(Check.at_most("u -> v -> u round trip", rt, float(_param(cfg, "roundtrip_tol")), "relative max"))
    rep.plot = {"x": "dt", "y": ["mean_residual_V"], "xlabel": "dt", "ylabel": "mean V residual", "guides": [0.5, 1.0]}
    return rep


# -- simulate --------------------------------------------------------------


def _trajectory_csv(traj, qp, cfg: RunConfig) -> str:
    solver = cfg.solver()
    t, energy, K, recon = energy_terms(traj, qp, solver)
    nv = traj.norms_V(cfg.alpha)
    nw = traj.norms_W(cfg.alpha)
    q = qp.values[traj.indices]
    lines = ["t,Q,norm_V,norm_W,energy_W,energy_K,energy_reconstruction"]
    for j in range(len(t)):
        lines.append(",".join(fmt(float(x)) for x in (t[j], q[j], nv[j], nw[j], energy[j], K[j], recon[j])))
    return "\n".join(lines) + "\n"


def study_simulate(cfg: RunConfig, threads: int = 1) -> StudyReport:
    rep = StudyReport(
        "simulate", _snapshot(cfg, "simulate", ("snapshots", "closed_form_tol")),
        ["seed", "final_norm_V", "final_norm_W", "energy_residual", "closed_form_error", "seeds"],
    )
    solver = cfg.solver()
    spec = cfg.init_spec()
    linear_case = cfg.sigma == 0 and not cfg.nonlinear and cfg.force.kind == "zero"
    snaps = [float(x) for x in str(_param(cfg, "snapshots")).split(",") if x.strip()]
    worst = 0.0
    for seed in cfg.seeds:
        qp = _qpath(cfg, seed, cfg.M)
        xi, _ = make_xi(spec, qp.base)
        traj = solve_v(xi, qp, solver)
        rep.extra_csv[f"trajectory_seed{seed}.csv"] = _trajectory_csv(traj, qp, cfg)
        for ts in snaps:
            j = qp.base.index_of(ts)
            rep.extra_csv[f"snapshot_seed{seed}_t{ts:g}.csv"] = field_to_csv(traj.state(j), cfg.alpha)
        err = math.nan
        if linear_case:
            sym = a_hat_symbol(cfg.n, cfg.alpha)
            c0 = traj.coeffs[0]
            exact = np.exp(-cfg.nu * sym[None] * traj.times[:, None, None]) * c0[None]
            err = float(np.max(np.abs(exact - traj.coeffs)) / max(np.max(np.abs(c0)), 1e-300))
            worst = max(worst, err)
        rep.add_row(seed=seed, final_norm_V=float(traj.norms_V(cfg.alpha)[-1]), final_norm_W=float(traj.norms_W(cfg.alpha)[-1]),
                    energy_residual=energy_residual(traj, qp, solver), closed_form_error=err, seeds=1)
    if linear_case:
        rep.checks.append(Check.at_most("closed-form linear decay", worst, float(_param(cfg, "closed_form_tol"))))
    return rep


STUDIES = {
    "basis-check": study_basis,
    "operator-check": study_operators,
    "energy": study_energy,
    "converge-galerkin": study_galerkin,
    "malliavin-fd": study_malliavin_fd,
    "chain-rule": study_chain_rule,
    "product-rule": study_product_rule,
    "theorem-residual": study_theorem,
    "simulate": study_simulate,
}


def run_study(name: str, cfg: RunConfig, threads: int = 1) -> StudyReport:
    if name not in STUDIES:
        raise KeyError(f"unknown study {name!r}; expected one of {sorted(STUDIES)}")
    return STUDIES[name](cfg, threads)
