"""Scalar Brownian paths, the exponential transform Q and its truncation.

Sampled paths are generated hierarchically so that refinement is consistent:
for ``M = m0 * 2**L`` (``m0`` odd) the coarse ``m0``-step walk comes from the
stream ``[seed, 0]`` and every bisection level ``l`` fills midpoints by
Brownian-bridge draws from the stream ``[seed, l]``.  Doubling ``M`` therefore
only adds points; the existing ones are reproduced bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BrownianPath",
    "QPath",
    "sample_path",
    "synthetic_path",
    "q_of",
    "d_q",
    "omega_N_indicator",
    "prob_omega_N",
    "path_to_csv",
]

_SYNTHETIC = {
    "sin": (np.sin, np.cos),
    "zero": (np.zeros_like, np.zeros_like),
    "linear": (lambda t: t, np.ones_like),
}


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Scalar path values ``W(t_j)`` on the uniform grid ``t_j = j T / M``."""

    T: float
    values: np.ndarray = field(repr=False)
    seed: int | None = None
    kind: str = "sampled"

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a path needs at least two grid values")
        if v[0] != 0.0:
            raise ValueError("W(0) must be 0")
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.size - 1

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dt

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def index_of(self, t: float) -> int:
        j = t / self.dt
        jr = int(round(j))
        if abs(j - jr) > 1e-9 * max(1.0, abs(j)) or not 0 <= jr <= self.M:
            raise ValueError(f"time {t} is not on the path grid (dt={self.dt})")
        return jr

    def restrict(self, M: int) -> "BrownianPath":
        """Subsample to a coarser grid with ``M`` steps (``M`` must divide ``self.M``)."""
        if self.M % M:
            raise ValueError(f"{M} does not divide {self.M}")
        return BrownianPath(self.T, self.values[:: self.M // M], self.seed, self.kind)

    def shifted(self, eps: float, shift: np.ndarray) -> "BrownianPath":
        """Path ``W + eps * shift`` (``shift`` given on the grid, ``shift[0] == 0``)."""
        shift = np.asarray(shift, dtype=float)
        return BrownianPath(self.T, self.values + eps * shift, self.seed, self.kind + "+shift")


def _split_dyadic(M: int) -> tuple[int, int]:
    levels = 0
    while M % 2 == 0:
        M //= 2
        levels += 1
    return M, levels


def sample_path(seed: int, M: int, T: float) -> BrownianPath:
    """Reproducible, refinement-consistent Brownian path with ``M`` steps on ``[0, T]``."""
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    m0, levels = _split_dyadic(int(M))
    rng = np.random.default_rng([int(seed), 0])
    w = np.concatenate([[0.0], np.cumsum(rng.standard_normal(m0) * math.sqrt(T / m0))])
    h = T / m0
    for level in range(1, levels + 1):
        rng = np.random.default_rng([int(seed), level])
        z = rng.standard_normal(w.size - 1)
        mid = 0.5 * (w[:-1] + w[1:]) + math.sqrt(h / 4.0) * z
        out = np.empty(2 * w.size - 1)
        out[0::2] = w
        out[1::2] = mid
        w = out
        h /= 2.0
    return BrownianPath(float(T), w, int(seed), "sampled")


def synthetic_path(M: int, T: float, func: str = "sin", amplitude: float = 1.0) -> BrownianPath:
    """Deterministic smooth path ``amplitude * func(t)`` for integrator-order studies."""
    if func not in _SYNTHETIC:
        raise ValueError(f"unknown synthetic path {func!r}; expected one of {sorted(_SYNTHETIC)}")
    t = np.arange(M + 1) * (T / M)
    return BrownianPath(float(T), amplitude * _SYNTHETIC[func][0](t), None, f"synthetic:{func}")


@dataclass(frozen=True, eq=False)
class QPath:
    """``Q(t_j) = exp(sigma * clamp(W(t_j), -N, N))`` with ``N = inf`` meaning no clamp."""

    base: BrownianPath
    sigma: float
    N: float = math.inf

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.N >= 0:
            raise ValueError(f"truncation level must be >= 0, got {self.N}")

    @property
    def values(self) -> np.ndarray:
        w = self.base.values
        if math.isfinite(self.N):
            w = np.clip(w, -self.N, self.N)
        return np.exp(self.sigma * w)

    @property
    def interior(self) -> np.ndarray:
        """Grid points where the clamp is inactive (``|W| < N``)."""
        return np.abs(self.base.values) < self.N

    @property
    def dq_diag(self) -> np.ndarray:
        """``D_r Q(t_j)`` for any ``r <= t_j``: ``sigma Q(t_j)`` off the clamp, else 0."""
        return np.where(self.interior, self.sigma * self.values, 0.0)

    def truncated(self, N: float) -> "QPath":
        return QPath(self.base, self.sigma, N)


def q_of(path: BrownianPath, sigma: float, N: float = math.inf) -> QPath:
    return QPath(path, float(sigma), float(N))


def d_q(qpath: QPath, r: float, s: float) -> float:
    """Malliavin derivative ``D_r Q(s)`` for grid times ``r`` and ``s``."""
    base = qpath.base
    jr = base.index_of(r)
    js = base.index_of(s)
    if jr > js:
        return 0.0
    return float(qpath.dq_diag[js])


def omega_N_indicator(path: BrownianPath, N: float) -> bool:
    """True iff the grid path stays in ``[-N, N]``."""
    return bool(np.max(np.abs(path.values)) <= N)


def prob_omega_N(N: float, T: float, terms: int = 200) -> float:
    """``P(sup_{s<=T} |W(s)| <= N)`` for continuous Brownian motion.

    Reflection-principle series for the exit time of ``(-N, N)``.
    """
    if N <= 0:
        return 0.0
    k = np.arange(terms)
    m = 2 * k + 1
    s = np.sum((-1.0) ** k / m * np.exp(-(m**2) * np.pi**2 * T / (8.0 * N * N)))
    return float(min(1.0, max(0.0, 4.0 / np.pi * s)))


def path_to_csv(qpath: QPath) -> str:
    lines = ["t,W,Q"]
    for t, w, q in zip(qpath.base.times, qpath.base.values, qpath.values):
        lines.append(f"{float(t)!r},{float(w)!r},{float(q)!r}")
    return "\n".join(lines) + "\n"
