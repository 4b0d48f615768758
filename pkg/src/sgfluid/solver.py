"""Pathwise integration of the transformed random PDE.

For a fixed noise path the substitution ``u = Q v`` with ``Q = exp(sigma W)``
turns the Stratonovich equation into the random ODE system

    dv/dt = -nu A_hat v - Q(t) B_hat(v, v) + Q(t)^{-1} F_hat(Q(t) v, t),

integrated on the Galerkin span of cutoff ``n`` by Heun's method with an
exact integrating factor for the diagonal ``-nu A_hat`` part.  Q is read at
the grid points of the path, which are exactly the Heun stage times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .operators import ForceSpec, _workspace, a_hat_symbol, force_coeffs
from .spectral import SpectralField, project, v_weight, w_weight, norm_W, wavenumbers
from .wiener import BrownianPath, QPath

__all__ = [
    "BlowUpError",
    "SolverConfig",
    "Trajectory",
    "InitSpec",
    "drift",
    "solve_v",
    "energy_terms",
    "energy_residual",
    "assemble_u",
    "invert_u",
    "make_xi",
    "G_CATALOG",
]


class BlowUpError(RuntimeError):
    """The W norm left the a priori bound by a factor the model cannot produce."""


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 1.0
    nu: float = 1.0
    n: int = 8
    force: ForceSpec = field(default_factory=ForceSpec)
    grid: int | None = None
    nonlinear: bool = True
    guard: float = 1e6

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.n < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.n}")

    def with_cutoff(self, n: int) -> "SolverConfig":
        return replace(self, n=n)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``coeffs[j]`` of cutoff ``n`` at ``times[j]``.

    ``indices`` are the positions of the stored states on the path grid.
    """

    times: np.ndarray = field(repr=False)
    coeffs: np.ndarray = field(repr=False)
    n: int
    indices: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("times", "coeffs", "indices"):
            a = np.array(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.coeffs.shape[1:] != (2 * self.n + 1, 2 * self.n + 1):
            raise ValueError("state shape does not match cutoff")

    def __len__(self):
        return self.coeffs.shape[0]

    def state(self, j: int) -> SpectralField:
        return SpectralField(self.n, self.coeffs[j])

    @property
    def final(self) -> SpectralField:
        return self.state(-1)

    def norms_W(self, alpha: float) -> np.ndarray:
        return np.sqrt(np.sum(w_weight(self.n, alpha) * np.abs(self.coeffs) ** 2, axis=(-2, -1)))

    def norms_V(self, alpha: float) -> np.ndarray:
        return np.sqrt(np.sum(v_weight(self.n, alpha) * np.abs(self.coeffs) ** 2, axis=(-2, -1)))

    def full_grid(self) -> bool:
        return len(self.indices) >= 2 and bool(np.all(np.diff(self.indices) == 1)) and self.indices[0] == 0


# -- right-hand side -------------------------------------------------------


def _nonlinear_coeffs(c, t, q, config: SolverConfig):
    """Everything except the ``-nu A_hat`` part, for state arrays ``c``."""
    n, alpha = config.n, config.alpha
    out = np.zeros_like(c)
    if config.nonlinear:
        out -= q * _workspace(n, alpha, config.grid).b_hat(c, c)
    if config.force.kind != "zero":
        out += force_coeffs(q * c, t, config.force, n, alpha) / (q * v_weight(n, alpha))
    return out


def drift(v: SpectralField, t: float, q: float, config: SolverConfig) -> SpectralField:
    """Right side of the Galerkin system at time ``t`` with ``Q(t) = q``.

    ``q`` may also be a :class:`QPath`, in which case ``t`` must be a grid time.
    """
    if isinstance(q, QPath):
        q = float(q.values[q.base.index_of(t)])
    c = project(v, config.n).padded(config.n).coeffs
    out = -config.nu * a_hat_symbol(config.n, config.alpha) * c + _nonlinear_coeffs(c, t, q, config)
    return SpectralField(config.n, out)


def _store_plan(M: int, store: str | int) -> np.ndarray:
    if store == "all":
        return np.arange(M + 1)
    if store == "final":
        return np.array([0, M])
    stride = int(store)
    if stride < 1:
        raise ValueError(f"store stride must be >= 1, got {stride}")
    idx = np.arange(0, M + 1, stride)
    if idx[-1] != M:
        idx = np.append(idx, M)
    return idx


def solve_v(
    f: SpectralField,
    qpath: QPath,
    config: SolverConfig,
    store: str | int = "all",
) -> Trajectory:
    """Integrate the Galerkin system from ``Pi_n f`` along the grid of ``qpath``.

    ``store`` is ``"all"``, ``"final"`` (first and last state) or an integer
    stride.
    """
    n, alpha, nu = config.n, config.alpha, config.nu
    path = qpath.base
    M, dt = path.M, path.dt
    times = path.times
    q = qpath.values
    c = project(f, n).padded(n).coeffs.copy()
    E = np.exp(-nu * a_hat_symbol(n, alpha) * dt)
    wts = w_weight(n, alpha)
    bound = config.guard * math.sqrt(np.sum(wts * np.abs(c) ** 2))

    keep = _store_plan(M, store)
    out = np.empty((keep.size, 2 * n + 1, 2 * n + 1), dtype=complex)
    slot = 0
    if keep[0] == 0:
        out[0] = c
        slot = 1
    for j in range(M):
        k1 = _nonlinear_coeffs(c, times[j], q[j], config)
        pred = E * (c + dt * k1)
        k2 = _nonlinear_coeffs(pred, times[j + 1], q[j + 1], config)
        c = E * c + 0.5 * dt * (E * k1 + k2)
        c[n, n] = 0.0
        if not np.all(np.isfinite(c)) or math.sqrt(np.sum(wts * np.abs(c) ** 2)) > bound > 0:
            raise BlowUpError(
                f"|v|_W exceeded {config.guard:g} |f|_W at t={times[j + 1]:.6g} "
                f"(n={n}, dt={dt:g}); the a priori bound rules this out"
            )
        if slot < keep.size and keep[slot] == j + 1:
            out[slot] = c
            slot += 1
    meta = {"alpha": alpha, "nu": nu, "scheme": "if-heun", "seed": path.seed, "path": path.kind}
    return Trajectory(times[keep], out, n, keep, meta)


# -- energy equation -------------------------------------------------------


def _force_Q(c, t, q, config: SolverConfig):
    """``Q^{-1} F(Q v, t)`` (unlifted), the forcing seen by the curl pairing."""
    if config.force.kind == "zero":
        return np.zeros_like(c)
    return force_coeffs(q * c, t, config.force, config.n, config.alpha) / q


def energy_terms(traj: Trajectory, qpath: QPath, config: SolverConfig):
    """Return ``(times, |v|_W^2, K, reconstruction)`` along a full-grid trajectory.

    ``K(v, s) = ((nu/alpha) curl v + curl F_Q(v, s), curl(v - alpha Lap v))`` and
    the reconstruction is ``|f_n|_W^2 e^{-2 nu t/alpha} + 2 int_0^t K e^{-2 nu (t-s)/alpha} ds``
    with trapezoid quadrature.
    """
    if not traj.full_grid():
        raise ValueError("energy monitor needs a trajectory stored on every grid step")
    n, alpha, nu = traj.n, config.alpha, config.nu
    ksq = wavenumbers(n)[2]
    c = traj.coeffs
    t = traj.times
    q = qpath.values[traj.indices]
    energy = np.sum(w_weight(n, alpha) * np.abs(c) ** 2, axis=(-2, -1))
    pair = ksq * (1.0 + alpha * ksq)
    fq = np.stack([_force_Q(c[j], t[j], q[j], config) for j in range(len(t))])
    K = np.real(np.sum(pair * ((nu / alpha) * c + fq) * np.conj(c), axis=(-2, -1)))
    beta = 2.0 * nu / alpha
    dt = np.diff(t)
    integral = np.zeros_like(energy)
    for j in range(1, len(t)):
        decay = math.exp(-beta * dt[j - 1])
        integral[j] = decay * integral[j - 1] + 0.5 * dt[j - 1] * (decay * K[j - 1] + K[j])
    recon = energy[0] * np.exp(-beta * t) + 2.0 * integral
    return t, energy, K, recon


def energy_residual(traj: Trajectory, qpath: QPath, config: SolverConfig) -> float:
    """Max over the grid of ``| |v(t)|_W^2 - reconstruction(t) |``."""
    _, energy, _, recon = energy_terms(traj, qpath, config)
    return float(np.max(np.abs(energy - recon)))


# -- Q transform -----------------------------------------------------------


def _q_on(traj: Trajectory, qpath: QPath) -> np.ndarray:
    if traj.indices[-1] > qpath.base.M:
        raise ValueError("trajectory extends past the path grid")
    grid_t = qpath.base.times[traj.indices]
    if not np.allclose(grid_t, traj.times, rtol=0, atol=1e-12 * max(1.0, qpath.base.T)):
        raise ValueError("trajectory and path grids do not match")
    return qpath.values[traj.indices]


def assemble_u(traj: Trajectory, qpath: QPath) -> Trajectory:
    """``u(t) = Q(t) v(t)``."""
    q = _q_on(traj, qpath)
    return Trajectory(traj.times, traj.coeffs * q[:, None, None], traj.n, traj.indices, dict(traj.meta, field="u"))


def invert_u(u_traj: Trajectory, qpath: QPath) -> Trajectory:
    """``v(t) = u(t) / Q(t)``."""
    q = _q_on(u_traj, qpath)
    return Trajectory(u_traj.times, u_traj.coeffs / q[:, None, None], u_traj.n, u_traj.indices, dict(u_traj.meta, field="v"))


# -- initial conditions ----------------------------------------------------


def _clamp(x):
    return np.clip(x, -1.0, 1.0)


def _dclamp(x):
    return np.where(np.abs(x) < 1.0, 1.0, 0.0)


def _dtanh(x):
    return 1.0 / np.cosh(x) ** 2


G_CATALOG = {
    "identity_clamped": (_clamp, _dclamp),
    "sin": (np.sin, np.cos),
    "tanh": (np.tanh, _dtanh),
}


@dataclass(frozen=True)
class InitSpec:
    """Initial condition ``xi = f0`` or ``xi = f0 + g(W(T)) f1``."""

    kind: str
    f0: SpectralField
    f1: SpectralField | None = None
    g: str = "sin"

    def __post_init__(self):
        if self.kind not in ("deterministic", "endpoint_functional"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "endpoint_functional":
            if self.f1 is None:
                raise ValueError("endpoint_functional initial condition needs f1")
            if self.g not in G_CATALOG:
                raise ValueError(f"unknown g {self.g!r}; expected one of {sorted(G_CATALOG)}")


def make_xi(spec: InitSpec, path: BrownianPath) -> tuple[SpectralField, SpectralField]:
    """Return ``(xi(omega), D_s xi)``; the derivative does not depend on ``s``."""
    if spec.kind == "deterministic":
        return spec.f0, SpectralField.zeros(spec.f0.n)
    g, dg = G_CATALOG[spec.g]
    wT = float(path.values[-1])
    xi = spec.f0 + float(g(wT)) * spec.f1
    dxi = float(dg(wT)) * spec.f1
    m = max(spec.f0.n, spec.f1.n)
    return xi.padded(m), dxi.padded(m)
