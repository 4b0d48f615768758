"""Operators of the transformed second grade equation.

``A_hat = (I + alpha A)^{-1} A`` is the per-mode symbol ``|k|^2/(1+alpha|k|^2)``.
``B_hat(u, v) = (I + alpha A)^{-1} P(curl(u - alpha Lap u) x v)`` is evaluated
either pseudospectrally on a dealiased grid (``method="transform"``) or by the
exact convolution sum (``method="direct"``, O(n^4), used as an oracle).

The array kernels (``*_coeffs``) accept arbitrary leading batch dimensions and
are what the integrators call; the field-level functions wrap them.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import SpectralField, ScalarSpectralField, v_weight, wavenumbers

__all__ = [
    "GridTooSmallError",
    "ForceSpec",
    "BHatWorkspace",
    "a_hat_symbol",
    "apply_A_hat",
    "curl",
    "curl_transport_weight",
    "apply_B_hat",
    "b_hat_coeffs",
    "b_hat_direct_coeffs",
    "leray_project",
    "apply_F",
    "apply_F_hat",
    "apply_DF_hat",
    "force_coeffs",
    "dforce_coeffs",
]

TWO_PI = 2.0 * np.pi


class GridTooSmallError(ValueError):
    """Raised when a transform grid cannot dealias the quadratic product exactly."""


def a_hat_symbol(n: int, alpha: float) -> np.ndarray:
    ksq = wavenumbers(n)[2]
    return ksq / (1.0 + alpha * ksq)


def apply_A_hat(u: SpectralField, alpha: float) -> SpectralField:
    return SpectralField(u.n, a_hat_symbol(u.n, alpha) * u.coeffs)


def curl(u: SpectralField) -> ScalarSpectralField:
    """Plain vorticity; symbol ``i|k|`` on the polarization coefficient."""
    kabs = wavenumbers(u.n)[3]
    return ScalarSpectralField(u.n, 1j * kabs * u.coeffs)


def _transport_symbol(n: int, alpha: float) -> np.ndarray:
    _, _, ksq, kabs, *_ = wavenumbers(n)
    return 1j * kabs * (1.0 + alpha * ksq)


def curl_transport_weight(u: SpectralField, alpha: float) -> ScalarSpectralField:
    """``curl(u - alpha Lap u)``; symbol ``i|k|(1+alpha|k|^2)``."""
    return ScalarSpectralField(u.n, _transport_symbol(u.n, alpha) * u.coeffs)


def leray_project(g1: np.ndarray, g2: np.ndarray, n: int) -> np.ndarray:
    """Polarization coefficients of the divergence-free, mean-zero part of a
    vector field given by its component coefficient arrays."""
    _, _, _, _, p1, p2, _ = wavenumbers(n)
    return g1 * p1 + g2 * p2


@lru_cache(maxsize=None)
def _grid_index(n: int, L: int):
    k = np.arange(-n, n + 1) % L
    return np.ix_(k, k)


class BHatWorkspace:
    """Precomputed symbols and scratch layout for the transform evaluation of B_hat.

    One workspace per worker; instances hold no mutable shared state beyond
    read-only arrays.
    """

    def __init__(self, n: int, alpha: float, grid: int | None = None):
        if n < 1:
            raise ValueError(f"cutoff must be >= 1, got {n}")
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        L = 4 * n if grid is None else int(grid)
        if L < 3 * n + 1:
            raise GridTooSmallError(
                f"grid {L} < 3n+1 = {3 * n + 1}: quadratic product would alias"
            )
        self.n = n
        self.alpha = float(alpha)
        self.L = L
        _, _, ksq, _, p1, p2, _ = wavenumbers(n)
        self.p1 = p1
        self.p2 = p2
        self.transport = _transport_symbol(n, alpha)
        self.inv_lift = 1.0 / (1.0 + alpha * ksq)
        self.index = _grid_index(n, L)
        self._to_phys = L * L / TWO_PI
        self._to_spec = TWO_PI / (L * L)

    def _physical(self, c: np.ndarray) -> np.ndarray:
        full = np.zeros(c.shape[:-2] + (self.L, self.L), dtype=complex)
        full[(Ellipsis,) + self.index] = c
        return np.fft.ifft2(full).real * self._to_phys

    def _spectral(self, g: np.ndarray) -> np.ndarray:
        return np.fft.fft2(g)[(Ellipsis,) + self.index] * self._to_spec

    def _finish(self, g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
        b = (self._spectral(g1) * self.p1 + self._spectral(g2) * self.p2) * self.inv_lift
        b[..., self.n, self.n] = 0.0
        return b

    def b_hat(self, cu: np.ndarray, cv: np.ndarray) -> np.ndarray:
        w = self._physical(self.transport * cu)
        v1 = self._physical(self.p1 * cv)
        v2 = self._physical(self.p2 * cv)
        return self._finish(-w * v2, w * v1)

    def b_hat_sym(self, cy: np.ndarray, cv: np.ndarray) -> np.ndarray:
        """``B_hat(y, v) + B_hat(v, y)`` sharing the transforms of ``v``."""
        wy = self._physical(self.transport * cy)
        y1 = self._physical(self.p1 * cy)
        y2 = self._physical(self.p2 * cy)
        wv = self._physical(self.transport * cv)
        v1 = self._physical(self.p1 * cv)
        v2 = self._physical(self.p2 * cv)
        return self._finish(-wy * v2 - wv * y2, wy * v1 + wv * y1)


@lru_cache(maxsize=32)
def _workspace(n: int, alpha: float, grid: int | None) -> BHatWorkspace:
    return BHatWorkspace(n, alpha, grid)


def b_hat_coeffs(cu: np.ndarray, cv: np.ndarray, n: int, alpha: float, grid: int | None = None) -> np.ndarray:
    return _workspace(n, float(alpha), grid).b_hat(cu, cv)


def _convolve_exact(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """Coefficients ``sum_{p+q=k} a_p b_q`` for ``|k|_inf <= n`` by explicit summation."""
    out = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
    for i in range(2 * n + 1):
        for j in range(2 * n + 1):
            ap = a[i, j]
            if ap == 0:
                continue
            p1, p2 = i - n, j - n
            # q = k - p ranges over the stored set; k in the cutoff window
            k1lo, k1hi = max(-n, p1 - n), min(n, p1 + n)
            k2lo, k2hi = max(-n, p2 - n), min(n, p2 + n)
            if k1lo > k1hi or k2lo > k2hi:
                continue
            out[k1lo + n : k1hi + n + 1, k2lo + n : k2hi + n + 1] += ap * b[
                k1lo - p1 + n : k1hi - p1 + n + 1, k2lo - p2 + n : k2hi - p2 + n + 1
            ]
    return out


def b_hat_direct_coeffs(cu: np.ndarray, cv: np.ndarray, n: int, alpha: float) -> np.ndarray:
    """Exact B_hat by the Fourier convolution sum (no grid, no aliasing)."""
    _, _, ksq, _, p1, p2, _ = wavenumbers(n)
    w = _transport_symbol(n, alpha) * cu
    g1 = -_convolve_exact(w, p2 * cv, n) / TWO_PI
    g2 = _convolve_exact(w, p1 * cv, n) / TWO_PI
    b = leray_project(g1, g2, n) / (1.0 + alpha * ksq)
    b[n, n] = 0.0
    return b


def apply_B_hat(
    u: SpectralField,
    v: SpectralField,
    alpha: float,
    method: str = "transform",
    grid: int | None = None,
) -> SpectralField:
    if u.n != v.n:
        raise ValueError(f"cutoff mismatch: {u.n} != {v.n}")
    if method == "transform":
        return SpectralField(u.n, b_hat_coeffs(u.coeffs, v.coeffs, u.n, alpha, grid))
    if method == "direct":
        return SpectralField(u.n, b_hat_direct_coeffs(u.coeffs, v.coeffs, u.n, alpha))
    raise ValueError(f"unknown B_hat method {method!r}")


# -- forcing ---------------------------------------------------------------

_FORCE_KINDS = ("zero", "linear_gain", "saturated")


@dataclass(frozen=True)
class ForceSpec:
    """Built-in forcing family.

    ``linear_gain``: ``F(u, t) = gain * exp(-t) * u``;
    ``saturated``: ``F(u, t) = gain * u / (1 + |u|_V^2)``.
    Both vanish at ``u = 0`` and are Lipschitz in V.
    """

    kind: str = "zero"
    gain: float = 0.0

    def __post_init__(self):
        if self.kind not in _FORCE_KINDS:
            raise ValueError(f"unknown force kind {self.kind!r}; expected one of {_FORCE_KINDS}")

    @property
    def lipschitz(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "linear_gain":
            return abs(self.gain)
        return 2.0 * abs(self.gain)


def _vnorm2(c: np.ndarray, n: int, alpha: float) -> np.ndarray:
    return np.sum(v_weight(n, alpha) * np.abs(c) ** 2, axis=(-2, -1))


def _vinner(a: np.ndarray, b: np.ndarray, n: int, alpha: float) -> np.ndarray:
    return np.real(np.sum(v_weight(n, alpha) * a * np.conj(b), axis=(-2, -1)))


def force_coeffs(c: np.ndarray, t: float, spec: ForceSpec, n: int, alpha: float) -> np.ndarray:
    """Unlifted ``F(u, t)`` on coefficient arrays."""
    if spec.kind == "zero":
        return np.zeros_like(c)
    if spec.kind == "linear_gain":
        return spec.gain * np.exp(-t) * c
    s = _vnorm2(c, n, alpha)
    return (spec.gain / (1.0 + s))[..., None, None] * c


def dforce_coeffs(c: np.ndarray, t: float, g: np.ndarray, spec: ForceSpec, n: int, alpha: float) -> np.ndarray:
    """Unlifted Frechet derivative ``DF(u, t)(g)``; ``c`` may be a single state
    broadcast against a batch of directions ``g``."""
    if spec.kind == "zero":
        return np.zeros(np.broadcast_shapes(c.shape, g.shape), dtype=complex)
    if spec.kind == "linear_gain":
        return spec.gain * np.exp(-t) * g
    s = _vnorm2(c, n, alpha)
    ug = _vinner(c, g, n, alpha)
    a = spec.gain / (1.0 + s)
    b = 2.0 * spec.gain * ug / (1.0 + s) ** 2
    return np.asarray(a)[..., None, None] * g - np.asarray(b)[..., None, None] * c


def apply_F(u: SpectralField, t: float, spec: ForceSpec, alpha: float) -> SpectralField:
    return SpectralField(u.n, force_coeffs(u.coeffs, t, spec, u.n, alpha))


def apply_F_hat(u: SpectralField, t: float, spec: ForceSpec, alpha: float) -> SpectralField:
    return SpectralField(u.n, force_coeffs(u.coeffs, t, spec, u.n, alpha) / v_weight(u.n, alpha))


def apply_DF_hat(u: SpectralField, t: float, g: SpectralField, spec: ForceSpec, alpha: float) -> SpectralField:
    if u.n != g.n:
        raise ValueError(f"cutoff mismatch: {u.n} != {g.n}")
    return SpectralField(u.n, dforce_coeffs(u.coeffs, t, g.coeffs, spec, u.n, alpha) / v_weight(u.n, alpha))
