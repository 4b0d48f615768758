"""Malliavin and Frechet derivatives of the pathwise solution.

``Y_r(t)`` (the Malliavin derivative ``D_r v(t, f)``) and ``z(t)`` (the
Frechet derivative ``Dv(t, f)(g)``) solve linear non-autonomous systems driven
by the base trajectory ``v(., f)``.  Both are integrated with the same
integrating-factor Heun scheme as the base solve so that discretization
errors stay comparable.

The sources of the ``Y_r`` system are the noise-derivatives of the drift,

    - D_r Q(s) B_hat(v, v)
    + D_r(1/Q)(s) F_hat(Q v, s)
    + (D_r Q(s) / Q(s)) DF_hat(Q v, s)(v),

and all three carry the same indicator ``r <= s``, so a whole grid of
differentiation times is integrated as one batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import _workspace, a_hat_symbol, dforce_coeffs, force_coeffs
from .solver import InitSpec, SolverConfig, Trajectory, _store_plan, make_xi, solve_v
from .spectral import SpectralField, project, v_weight
from .wiener import QPath

__all__ = [
    "MissingBaseTrajectoryError",
    "MalliavinField",
    "ChainRule",
    "solve_Y",
    "solve_frechet",
    "malliavin_field",
    "chain_rule",
    "nabla_solution",
    "one_sided_traces",
    "noise_shift_oracle",
    "shift_pairing",
    "r_grid",
]


class MissingBaseTrajectoryError(ValueError):
    """A linearized solve was requested without a matching base trajectory."""


@dataclass(frozen=True, eq=False)
class MalliavinField:
    """``values[a, b] = D_{r_a} X(t_b)`` on a grid of differentiation times ``r``
    and observation times ``t`` (both given as path-grid indices)."""

    r_indices: np.ndarray = field(repr=False)
    t_indices: np.ndarray = field(repr=False)
    dt: float
    values: np.ndarray = field(repr=False)
    n: int

    @property
    def r_times(self) -> np.ndarray:
        return self.r_indices * self.dt

    @property
    def t_times(self) -> np.ndarray:
        return self.t_indices * self.dt

    def at(self, r_index: int, t_index: int) -> SpectralField:
        a = int(np.flatnonzero(self.r_indices == r_index)[0])
        b = int(np.flatnonzero(self.t_indices == t_index)[0])
        return SpectralField(self.n, self.values[a, b])

    def norms_V(self, alpha: float) -> np.ndarray:
        return np.sqrt(np.sum(v_weight(self.n, alpha) * np.abs(self.values) ** 2, axis=(-2, -1)))


@dataclass(frozen=True, eq=False)
class ChainRule:
    """Two-term decomposition ``D_s v(t, xi) = z(t) + Y_s(t, xi)``."""

    total: MalliavinField
    y_part: MalliavinField
    frechet: Trajectory
    base: Trajectory
    xi: SpectralField
    dxi: SpectralField


def r_grid(M: int, stride: int) -> np.ndarray:
    """Every ``stride``-th grid index, always including ``0`` and ``M``."""
    return _store_plan(M, int(stride))


def _check_base(base, f, qpath: QPath, config: SolverConfig):
    if base is None:
        raise MissingBaseTrajectoryError("solve v(., f) first and pass it as `base`")
    if base.n != config.n or not base.full_grid() or base.indices[-1] != qpath.base.M:
        raise MissingBaseTrajectoryError("base trajectory does not cover the path grid at this cutoff")
    if f is not None and not np.array_equal(base.coeffs[0], project(f, config.n).padded(config.n).coeffs):
        raise MissingBaseTrajectoryError("base trajectory was started from a different initial field")


def _linearized(
    base: Trajectory,
    qpath: QPath,
    config: SolverConfig,
    y0: np.ndarray,
    with_source: bool,
    start: np.ndarray | None,
    keep: np.ndarray,
) -> np.ndarray:
    """Integrate the batch ``y`` (shape ``(R, 2n+1, 2n+1)``) and return the
    states at path indices ``keep`` (shape ``(R, len(keep), ...)``).

    Row ``a`` is held at zero until step ``start[a]`` and then integrated.
    """
    n, alpha, nu = config.n, config.alpha, config.nu
    path = qpath.base
    M, dt = path.M, path.dt
    times = path.times
    q = qpath.values
    dq = qpath.dq_diag
    v = base.coeffs
    ws = _workspace(n, alpha, config.grid)
    lift = v_weight(n, alpha)
    force = config.force
    E = np.exp(-nu * a_hat_symbol(n, alpha) * dt)

    def source(j):
        s = np.zeros_like(v[j])
        if dq[j] == 0.0:
            return s
        if config.nonlinear:
            s -= dq[j] * ws.b_hat(v[j], v[j])
        if force.kind != "zero":
            qv = q[j] * v[j]
            s -= (dq[j] / q[j] ** 2) * force_coeffs(qv, times[j], force, n, alpha) / lift
            s += (dq[j] / q[j]) * dforce_coeffs(qv, times[j], v[j], force, n, alpha) / lift
        return s

    def rhs(y, j):
        out = np.zeros_like(y)
        if config.nonlinear:
            out -= q[j] * ws.b_hat_sym(y, v[j])
        if force.kind != "zero":
            out += dforce_coeffs(q[j] * v[j], times[j], y, force, n, alpha) / lift
        if with_source:
            out += source(j)
        return out

    y = np.array(y0, dtype=complex)
    R = y.shape[0]
    start = np.zeros(R, dtype=int) if start is None else np.asarray(start)
    out = np.zeros((R, keep.size) + y.shape[1:], dtype=complex)
    slot = 0
    if keep[0] == 0:
        out[:, 0] = y
        slot = 1
    for j in range(M):
        active = start <= j
        if np.any(active):
            ya = y[active]
            k1 = rhs(ya, j)
            pred = E * (ya + dt * k1)
            k2 = rhs(pred, j + 1)
            ya = E * ya + 0.5 * dt * (E * k1 + k2)
            ya[..., n, n] = 0.0
            y[active] = ya
        if slot < keep.size and keep[slot] == j + 1:
            out[:, slot] = y
            slot += 1
    return out


def solve_Y(
    f: SpectralField,
    qpath: QPath,
    r: float,
    config: SolverConfig,
    base: Trajectory | None = None,
) -> Trajectory:
    """``Y_r(., f)`` on every grid step; zero up to and including ``t = r``."""
    _check_base(base, f, qpath, config)
    jr = qpath.base.index_of(r)
    keep = np.arange(qpath.base.M + 1)
    zero = np.zeros((1, 2 * config.n + 1, 2 * config.n + 1), dtype=complex)
    out = _linearized(base, qpath, config, zero, True, np.array([jr]), keep)
    return Trajectory(base.times, out[0], config.n, keep, dict(base.meta, field=f"Y_r(r={r:g})"))


def solve_frechet(
    f: SpectralField,
    g: SpectralField,
    qpath: QPath,
    config: SolverConfig,
    base: Trajectory | None = None,
) -> Trajectory:
    """Frechet derivative ``Dv(., f)(g)``: the variational equation started at ``Pi_n g``."""
    _check_base(base, f, qpath, config)
    keep = np.arange(qpath.base.M + 1)
    g0 = project(g, config.n).padded(config.n).coeffs[None]
    out = _linearized(base, qpath, config, g0, False, None, keep)
    return Trajectory(base.times, out[0], config.n, keep, dict(base.meta, field="frechet"))


def malliavin_field(
    f: SpectralField,
    qpath: QPath,
    config: SolverConfig,
    base: Trajectory | None = None,
    r_stride: int = 8,
    t_stride: int | None = None,
) -> MalliavinField:
    """``Y_r(t, f)`` for ``r`` on every ``r_stride``-th grid step, stored every
    ``t_stride`` steps (default: same as ``r_stride``)."""
    _check_base(base, f, qpath, config)
    M = qpath.base.M
    r_idx = r_grid(M, r_stride)
    t_idx = r_grid(M, r_stride if t_stride is None else t_stride)
    zero = np.zeros((r_idx.size, 2 * config.n + 1, 2 * config.n + 1), dtype=complex)
    vals = _linearized(base, qpath, config, zero, True, r_idx, t_idx)
    return MalliavinField(r_idx, t_idx, qpath.base.dt, vals, config.n)


def chain_rule(
    spec: InitSpec,
    qpath: QPath,
    config: SolverConfig,
    r_stride: int = 8,
    t_stride: int | None = None,
) -> ChainRule:
    """``D_s v(t, xi) = Dv(t, xi)(D_s xi) + (D_s v(t))(xi)``.

    ``D_s xi`` does not depend on ``s``, so a single Frechet solve serves
    every ``s``; for a deterministic ``xi`` the Frechet part is zero.
    """
    xi, dxi = make_xi(spec, qpath.base)
    base = solve_v(xi, qpath, config)
    ymf = malliavin_field(xi, qpath, config, base, r_stride, t_stride)
    if spec.kind == "deterministic":
        z = Trajectory(base.times, np.zeros_like(base.coeffs), config.n, base.indices, dict(base.meta, field="frechet"))
    else:
        z = solve_frechet(xi, dxi, qpath, config, base)
    total = ymf.values + z.coeffs[ymf.t_indices][None]
    field_total = MalliavinField(ymf.r_indices, ymf.t_indices, ymf.dt, total, config.n)
    return ChainRule(field_total, ymf, z, base, xi, dxi)


def nabla_solution(spec: InitSpec, qpath: QPath, config: SolverConfig, chain: ChainRule | None = None) -> Trajectory:
    """``(nabla u)_s`` for ``u = Q v(., xi)``.

    ``nabla Q = D+Q + D-Q = D_s Q(s)`` (``D-Q = 0`` by adaptedness) and
    ``D+v = D-v = Dv(s, xi)(D_s xi)`` because ``Y_s(s) = 0``; the product rule
    then gives ``D_s Q(s) v(s) + 2 Q(s) z(s)``.
    """
    if chain is None:
        xi, dxi = make_xi(spec, qpath.base)
        base = solve_v(xi, qpath, config)
        if spec.kind == "deterministic":
            zc = np.zeros_like(base.coeffs)
        else:
            zc = solve_frechet(xi, dxi, qpath, config, base).coeffs
    else:
        base, zc = chain.base, chain.frechet.coeffs
    q = qpath.values[base.indices]
    dq = qpath.dq_diag[base.indices]
    vals = dq[:, None, None] * base.coeffs + 2.0 * q[:, None, None] * zc
    return Trajectory(base.times, vals, config.n, base.indices, dict(base.meta, field="nabla_u"))


def one_sided_traces(spec: InitSpec, qpath: QPath, config: SolverConfig, s: float):
    """Discrete one-sided limits of ``D_s v(t, xi)`` at ``t = s +/- dt``.

    Returns ``(plus, minus, analytic)`` where ``analytic = Dv(s, xi)(D_s xi)``
    is the common limit.
    """
    xi, dxi = make_xi(spec, qpath.base)
    base = solve_v(xi, qpath, config)
    j = qpath.base.index_of(s)
    if not 0 < j < qpath.base.M:
        raise ValueError("s must be an interior grid time")
    if spec.kind == "deterministic":
        z = np.zeros_like(base.coeffs)
    else:
        z = solve_frechet(xi, dxi, qpath, config, base).coeffs
    y = solve_Y(xi, qpath, s, config, base).coeffs
    plus = SpectralField(config.n, z[j + 1] + y[j + 1])
    minus = SpectralField(config.n, z[j - 1] + y[j - 1])
    return plus, minus, SpectralField(config.n, z[j])


def noise_shift_oracle(
    spec: InitSpec,
    qpath: QPath,
    config: SolverConfig,
    r0: float,
    eps: float,
    central: bool = True,
) -> Trajectory:
    """Directional derivative of ``omega -> v(., xi(omega))`` along the Cameron-Martin
    shift ``W -> W + eps H`` with ``H(t) = (t - r0)^+`` (``h = 1_[r0, T]``).

    The shift moves both the coefficient Q and ``xi = f0 + g(W(T)) f1``.  A
    central difference is used unless ``central=False``.
    """
    path = qpath.base
    H = np.maximum(path.times - r0, 0.0)

    def run(e):
        shifted = QPath(path.shifted(e, H), qpath.sigma, qpath.N)
        xi, _ = make_xi(spec, shifted.base)
        return solve_v(xi, shifted, config)

    plus = run(eps)
    if central:
        minus = run(-eps)
        vals = (plus.coeffs - minus.coeffs) / (2.0 * eps)
    else:
        xi, _ = make_xi(spec, path)
        ref = solve_v(xi, qpath, config)
        vals = (plus.coeffs - ref.coeffs) / eps
    return Trajectory(plus.times, vals, config.n, plus.indices, {"field": "noise_shift_fd", "r0": r0, "eps": eps})


def shift_pairing(mf: MalliavinField, r0: float) -> np.ndarray:
    """``int_0^T D_s X(t) 1_[r0, T](s) ds`` by the trapezoid rule over the
    ``r`` grid, for every stored ``t``; ``r0`` must lie on the ``r`` grid."""
    r = mf.r_times
    hits = np.flatnonzero(np.isclose(r, r0, rtol=0, atol=1e-9 * max(1.0, r[-1])))
    if hits.size == 0:
        raise ValueError(f"r0={r0} is not on the differentiation grid")
    a = int(hits[0])
    rr = r[a:]
    vals = mf.values[a:]
    w = np.zeros(rr.size)
    d = np.diff(rr)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return np.tensordot(w, vals, axes=(0, 0))
