"""Stochastic sums on a path grid.

Stratonovich integrals are midpoint sums; Skorohod integrals of the solution
are obtained from them by subtracting ``(sigma/2) int nabla``.  For the
product-rule catalog the Skorohod integrals of the anticipating integrands are
also evaluated directly by the elementary Skorohod sum

    sum_j E[F(t_j) | increments outside (t_j, t_{j+1}]] * dW_j,

which for the catalog integrands (``a(t) + b(t) W(T)`` with ``a, b`` adapted)
is ``(a_j + b_j (W(T) - dW_j)) dW_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import _workspace, a_hat_symbol, force_coeffs
from .solver import InitSpec, SolverConfig, assemble_u, make_xi, solve_v
from .spectral import v_weight
from .wiener import BrownianPath, QPath

__all__ = [
    "MissingNablaError",
    "IntegrandPath",
    "stratonovich_midpoint",
    "ito_sum",
    "skorohod_from_stratonovich",
    "cumulative_trapezoid",
    "CatalogProcess",
    "catalog_pair",
    "PRODUCT_CATALOG",
    "product_rule_check",
    "product_rule_residuals",
    "nabla_of_product",
    "definition_residual",
]


class MissingNablaError(ValueError):
    """The integrand carries no nabla trace, so the Skorohod correction is unknown."""


@dataclass(frozen=True, eq=False)
class IntegrandPath:
    """Integrand values (scalars or coefficient arrays) on the path grid, with
    an optional nabla trace of the same shape."""

    values: np.ndarray = field(repr=False)
    nabla: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))
        if self.nabla is not None:
            nb = np.asarray(self.nabla)
            if nb.shape != self.values.shape:
                raise ValueError("nabla trace shape does not match the integrand")
            object.__setattr__(self, "nabla", nb)


def _check_grid(x: IntegrandPath, path: BrownianPath):
    if x.values.shape[0] != path.M + 1:
        raise ValueError(f"integrand has {x.values.shape[0]} grid values, path has {path.M + 1}")


def _bcast(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    return w.reshape(w.shape + (1,) * (x.ndim - 1))


def cumulative_trapezoid(x: np.ndarray, dt: float) -> np.ndarray:
    """``int_0^{t_j} x`` for every grid index ``j`` (first entry zero)."""
    out = np.zeros_like(x, dtype=np.result_type(x, float))
    out[1:] = np.cumsum(0.5 * dt * (x[:-1] + x[1:]), axis=0)
    return out


def _cum_strat(x: np.ndarray, dW: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=np.result_type(x, float))
    out[1:] = np.cumsum(0.5 * (x[:-1] + x[1:]) * _bcast(dW, x[1:]), axis=0)
    return out


def _cum_ito(x: np.ndarray, dW: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=np.result_type(x, float))
    out[1:] = np.cumsum(x[:-1] * _bcast(dW, x[:-1]), axis=0)
    return out


def stratonovich_midpoint(x: IntegrandPath, path: BrownianPath, t: float, sigma: float = 1.0):
    """``sum_j (x_j + x_{j+1})/2 * sigma dW_j`` over the grid steps in ``[0, t]``."""
    _check_grid(x, path)
    J = path.index_of(t)
    v = x.values
    if J == 0:
        return np.zeros_like(v[0], dtype=np.result_type(v, float))
    dW = path.increments[:J]
    return sigma * np.sum(0.5 * (v[:J] + v[1 : J + 1]) * _bcast(dW, v[:J]), axis=0)


def ito_sum(x: IntegrandPath, path: BrownianPath, t: float, sigma: float = 1.0):
    """Left-endpoint sum ``sum_j x_j * sigma dW_j``."""
    _check_grid(x, path)
    J = path.index_of(t)
    v = x.values
    if J == 0:
        return np.zeros_like(v[0], dtype=np.result_type(v, float))
    return sigma * np.sum(v[:J] * _bcast(path.increments[:J], v[:J]), axis=0)


def skorohod_from_stratonovich(x: IntegrandPath, path: BrownianPath, t: float, sigma: float = 1.0):
    """``int_0^t sigma x dW`` (Skorohod) ``= int_0^t x o sigma dW - (sigma/2) int_0^t nabla x``."""
    if x.nabla is None:
        raise MissingNablaError("integrand has no nabla trace")
    _check_grid(x, path)
    J = path.index_of(t)
    corr = cumulative_trapezoid(x.nabla[: J + 1], path.dt)[-1] if J > 0 else 0.0
    return stratonovich_midpoint(x, path, t, sigma) - 0.5 * sigma * corr


# -- product rule catalog --------------------------------------------------


@dataclass(frozen=True, eq=False)
class CatalogProcess:
    """``X_t = X_0 + int u dW + int v ds`` with analytic Malliavin kernel
    ``D_s X_t = A(t) 1_{s<=t} + B(t)`` and decomposition ``X = a + b W(T)``
    (``a, b`` adapted)."""

    name: str
    values: np.ndarray
    u: np.ndarray
    v: np.ndarray
    A: np.ndarray
    B: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def d_plus(self) -> np.ndarray:
        return self.A + self.B

    @property
    def d_minus(self) -> np.ndarray:
        return self.B

    @property
    def nabla(self) -> np.ndarray:
        return self.A + 2.0 * self.B


def _process(name: str, path: BrownianPath, sigma: float) -> CatalogProcess:
    w = path.values
    one = np.ones_like(w)
    zero = np.zeros_like(w)
    if name == "W":
        return CatalogProcess("W", w, one, zero, one, zero, w, zero)
    if name == "W(T)":
        wT = w[-1] * one
        return CatalogProcess("W(T)", wT, zero, zero, zero, one, zero, one)
    if name == "Q":
        q = np.exp(sigma * w)
        return CatalogProcess("Q", q, sigma * q, 0.5 * sigma**2 * q, sigma * q, zero, q, zero)
    raise KeyError(name)


PRODUCT_CATALOG = {
    "W,W(T)": ("W", "W(T)"),
    "Q,W(T)": ("Q", "W(T)"),
    "Q,Q": ("Q", "Q"),
}


def catalog_pair(example_id: str, path: BrownianPath, sigma: float = 1.0):
    if example_id not in PRODUCT_CATALOG:
        raise KeyError(f"unknown product-rule example {example_id!r}; expected one of {sorted(PRODUCT_CATALOG)}")
    n1, n2 = PRODUCT_CATALOG[example_id]
    return _process(n1, path, sigma), _process(n2, path, sigma)


def _cum_skorohod(a: np.ndarray, b: np.ndarray, u: np.ndarray, path: BrownianPath) -> np.ndarray:
    """Elementary Skorohod sums of ``(a + b W(T)) u`` with ``a, b, u`` adapted."""
    dW = path.increments
    wT = path.values[-1]
    proj = (a[:-1] + b[:-1] * (wT - dW)) * u[:-1]
    out = np.zeros_like(path.values)
    out[1:] = np.cumsum(proj * dW)
    return out


def product_rule_residuals(example_id: str, path: BrownianPath, sigma: float = 1.0) -> np.ndarray:
    """``|X1_t X2_t - RHS(t)|`` on every grid time for the catalog pair."""
    x1, x2 = catalog_pair(example_id, path, sigma)
    dt = path.dt
    lhs = x1.values * x2.values
    rhs = (
        x1.values[0] * x2.values[0]
        + _cum_skorohod(x2.a, x2.b, x1.u, path)
        + cumulative_trapezoid(x2.values * x1.v, dt)
        + _cum_skorohod(x1.a, x1.b, x2.u, path)
        + cumulative_trapezoid(x1.values * x2.v, dt)
        + 0.5 * cumulative_trapezoid(x1.nabla * x2.u, dt)
        + 0.5 * cumulative_trapezoid(x2.nabla * x1.u, dt)
    )
    return np.abs(lhs - rhs)


def product_rule_check(example_id: str, path: BrownianPath, t: float, sigma: float = 1.0) -> float:
    """Residual of the Skorohod product rule for a catalog pair at grid time ``t``."""
    return float(product_rule_residuals(example_id, path, sigma)[path.index_of(t)])


def nabla_of_product(example_id: str, path: BrownianPath, sigma: float = 1.0):
    """Return ``(nabla(X1 X2), X2 nabla X1 + X1 nabla X2)``; the first is built
    from the kernel of the product, the second from the product formula."""
    x1, x2 = catalog_pair(example_id, path, sigma)
    A = x2.values * x1.A + x1.values * x2.A
    B = x2.values * x1.B + x1.values * x2.B
    return A + 2.0 * B, x2.values * x1.nabla + x1.values * x2.nabla


# -- solution residual -----------------------------------------------------


def definition_residual(spec: InitSpec, qpath: QPath, config: SolverConfig, return_profile: bool = False):
    """Max over the grid of the V-norm residual of

        u(t) + nu int A_hat u + int B_hat(u, u) - xi - int F_hat(u, s) - int u o sigma dW

    for ``u = Q v(., xi)``, with trapezoid ds-integrals and midpoint sums.
    """
    n, alpha, nu = config.n, config.alpha, config.nu
    path = qpath.base
    xi, _ = make_xi(spec, path)
    traj = solve_v(xi, qpath, config)
    u = assemble_u(traj, qpath).coeffs
    t = path.times
    dt = path.dt
    lift = v_weight(n, alpha)
    drift = -nu * a_hat_symbol(n, alpha) * u
    if config.nonlinear:
        drift = drift - _workspace(n, alpha, config.grid).b_hat(u, u)
    if config.force.kind != "zero":
        drift = drift + np.stack([force_coeffs(u[j], t[j], config.force, n, alpha) for j in range(t.size)]) / lift
    noise = qpath.sigma * _cum_strat(u, path.increments)
    res = u - u[0] - cumulative_trapezoid(drift, dt) - noise
    norms = np.sqrt(np.sum(lift * np.abs(res) ** 2, axis=(-2, -1)))
    if return_profile:
        return float(np.max(norms)), norms
    return float(np.max(norms))
