"""Divergence-free Fourier fields on the 2-torus.

A velocity field is stored as one complex coefficient per wavevector
``k = (k1, k2)`` with ``max(|k1|, |k2|) <= n``, multiplying the unit
divergence-free polarization ``k_perp / |k|`` (``k_perp = (-k2, k1)``) and the
orthonormal scalar mode ``exp(i k.x) / (2 pi)``.  With this normalization the
L2 inner product is the plain coefficient sum and every operator of the
second grade model is a diagonal weight.

Because the polarization is odd in ``k``, a real velocity field satisfies
``c[-k] == -conj(c[k])``; scalar fields (vorticity-type quantities) satisfy
the usual ``s[-k] == conj(s[k])``.

Coefficient arrays have shape ``(2n+1, 2n+1)`` and are indexed as
``coeffs[k1 + n, k2 + n]``.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "WaveVector",
    "SpectralField",
    "ScalarSpectralField",
    "BasisElement",
    "wavenumbers",
    "build_basis",
    "project",
    "inner_V",
    "inner_W",
    "inner_L2",
    "inner_H1",
    "seminorm_H1",
    "norm_V",
    "norm_W",
    "norm_Wstar",
    "random_field",
    "to_physical",
    "save_field",
    "load_field",
    "field_to_csv",
    "field_from_csv",
]


@dataclass(frozen=True, order=True)
class WaveVector:
    k1: int
    k2: int

    def __post_init__(self):
        if self.k1 == 0 and self.k2 == 0:
            raise ValueError("the zero wavevector carries the mean and is excluded")

    @property
    def norm2(self) -> int:
        return self.k1 * self.k1 + self.k2 * self.k2


@lru_cache(maxsize=None)
def _wavenumbers(n: int):
    k = np.arange(-n, n + 1)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    k1 = k1.astype(float)
    k2 = k2.astype(float)
    ksq = k1**2 + k2**2
    kabs = np.sqrt(ksq)
    mask = ksq > 0
    safe = np.where(mask, kabs, 1.0)
    # unit polarization k_perp/|k|; zero at the (excluded) mean mode
    p1 = np.where(mask, -k2 / safe, 0.0)
    p2 = np.where(mask, k1 / safe, 0.0)
    for a in (k1, k2, ksq, kabs, p1, p2, mask):
        a.setflags(write=False)
    return k1, k2, ksq, kabs, p1, p2, mask


def wavenumbers(n: int):
    """Return read-only arrays ``(k1, k2, |k|^2, |k|, p1, p2, mask)`` for cutoff ``n``."""
    if n < 1:
        raise ValueError(f"cutoff must be >= 1, got {n}")
    return _wavenumbers(int(n))


def _check_alpha(alpha):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")


def v_weight(n: int, alpha: float) -> np.ndarray:
    """Per-mode weight of the V inner product, ``1 + alpha |k|^2``."""
    ksq = wavenumbers(n)[2]
    return 1.0 + alpha * ksq


def w_weight(n: int, alpha: float) -> np.ndarray:
    """Per-mode weight of the W inner product, ``|k|^2 (1 + alpha |k|^2)^2``."""
    ksq = wavenumbers(n)[2]
    return ksq * (1.0 + alpha * ksq) ** 2


def eigenvalues(n: int, alpha: float) -> np.ndarray:
    """Generalized eigenvalue per mode, ``|k|^2 (1 + alpha |k|^2)``."""
    ksq = wavenumbers(n)[2]
    return ksq * (1.0 + alpha * ksq)


def _pad(coeffs: np.ndarray, n_from: int, n_to: int) -> np.ndarray:
    if n_from == n_to:
        return coeffs
    if n_to < n_from:
        d = n_from - n_to
        return coeffs[..., d : d + 2 * n_to + 1, d : d + 2 * n_to + 1]
    out = np.zeros(coeffs.shape[:-2] + (2 * n_to + 1, 2 * n_to + 1), dtype=complex)
    d = n_to - n_from
    out[..., d : d + 2 * n_from + 1, d : d + 2 * n_from + 1] = coeffs
    return out


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Mean-zero divergence-free velocity field with cutoff ``n``."""

    n: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.n}")
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2 * self.n + 1, 2 * self.n + 1):
            raise ValueError(f"coefficient array shape {c.shape} does not match cutoff {self.n}")
        c[self.n, self.n] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, n: int) -> "SpectralField":
        return cls(n, np.zeros((2 * n + 1, 2 * n + 1), dtype=complex))

    @classmethod
    def from_modes(cls, n: int, modes: dict) -> "SpectralField":
        """Build a real field from ``{(k1, k2): c_k}``; the partner ``-k`` is filled in.

        Setting both ``k`` and ``-k`` explicitly is allowed only if they are
        consistent with reality.
        """
        c = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
        for (k1, k2), val in modes.items():
            WaveVector(k1, k2)
            if max(abs(k1), abs(k2)) > n:
                raise ValueError(f"mode {(k1, k2)} outside cutoff {n}")
            c[k1 + n, k2 + n] = val
            c[-k1 + n, -k2 + n] = -np.conj(val)
        return cls(n, c)

    def coefficient(self, k1: int, k2: int) -> complex:
        if max(abs(k1), abs(k2)) > self.n:
            return 0j
        return complex(self.coeffs[k1 + self.n, k2 + self.n])

    def reality_defect(self) -> float:
        """Max of ``|c[-k] + conj(c[k])|``; zero for a real velocity field."""
        c = self.coeffs
        return float(np.max(np.abs(c[::-1, ::-1] + np.conj(c))))

    def padded(self, n: int) -> "SpectralField":
        """Zero-pad (or truncate) to cutoff ``n``."""
        return SpectralField(n, _pad(self.coeffs, self.n, n))

    def _coerce(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        m = max(self.n, other.n)
        return m, _pad(self.coeffs, self.n, m), _pad(other.coeffs, other.n, m)

    def __add__(self, other):
        r = self._coerce(other)
        if r is NotImplemented:
            return r
        m, a, b = r
        return SpectralField(m, a + b)

    def __sub__(self, other):
        r = self._coerce(other)
        if r is NotImplemented:
            return r
        m, a, b = r
        return SpectralField(m, a - b)

    def __neg__(self):
        return SpectralField(self.n, -self.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar) or isinstance(scalar, complex):
            return NotImplemented
        return SpectralField(self.n, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __eq__(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ScalarSpectralField:
    """Real scalar field on the torus with the same coefficient layout."""

    n: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2 * self.n + 1, 2 * self.n + 1):
            raise ValueError(f"coefficient array shape {c.shape} does not match cutoff {self.n}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def coefficient(self, k1: int, k2: int) -> complex:
        return complex(self.coeffs[k1 + self.n, k2 + self.n])

    def reality_defect(self) -> float:
        c = self.coeffs
        return float(np.max(np.abs(c[::-1, ::-1] - np.conj(c))))


@dataclass(frozen=True)
class BasisElement:
    k: WaveVector
    lam: float
    normalization: float
    field: SpectralField = field(repr=False, compare=False)


def _upper_half(k1: int, k2: int) -> bool:
    return k1 > 0 or (k1 == 0 and k2 > 0)


def build_basis(n: int, alpha: float) -> list[BasisElement]:
    """Real basis orthonormal in W and orthogonal in V, sorted by eigenvalue.

    The element indexed by ``k`` in the upper half plane is the cosine-type
    field ``c[k] = a, c[-k] = -a``; the element indexed by ``-k`` is the
    sine-type field ``c[k] = c[-k] = i a``.  ``a = (2 w_k)^{-1/2}`` with
    ``w_k`` the W weight, so that ``|e_k|_W = 1``.  Ties in the eigenvalue are
    broken by ``(|k|^2, k1, k2)``.
    """
    if n < 1:
        raise ValueError(f"cutoff must be >= 1, got {n}")
    _check_alpha(alpha)
    ks = [
        (k1, k2)
        for k1 in range(-n, n + 1)
        for k2 in range(-n, n + 1)
        if (k1, k2) != (0, 0)
    ]
    ks.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k[0], k[1]))
    out = []
    for k1, k2 in ks:
        ksq = k1 * k1 + k2 * k2
        w = ksq * (1.0 + alpha * ksq) ** 2
        a = 1.0 / np.sqrt(2.0 * w)
        c = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
        if _upper_half(k1, k2):
            c[k1 + n, k2 + n] = a
            c[-k1 + n, -k2 + n] = -a
        else:
            c[k1 + n, k2 + n] = 1j * a
            c[-k1 + n, -k2 + n] = 1j * a
        out.append(
            BasisElement(
                k=WaveVector(k1, k2),
                lam=float(ksq * (1.0 + alpha * ksq)),
                normalization=float(a),
                field=SpectralField(n, c),
            )
        )
    return out


def project(u: SpectralField, n: int) -> SpectralField:
    """Galerkin projection: drop every mode with ``max(|k1|,|k2|) > n``.

    Projecting to a cutoff above ``u.n`` returns ``u`` unchanged (the extra
    modes are zero).
    """
    if n < 1:
        raise ValueError(f"cutoff must be >= 1, got {n}")
    if n >= u.n:
        return u
    return SpectralField(n, _pad(u.coeffs, u.n, n))


def _weighted(u: SpectralField, v: SpectralField, weight_fn) -> float:
    m = max(u.n, v.n)
    a = _pad(u.coeffs, u.n, m)
    b = _pad(v.coeffs, v.n, m)
    return float(np.real(np.sum(weight_fn(m) * a * np.conj(b))))


def inner_L2(u: SpectralField, v: SpectralField) -> float:
    return _weighted(u, v, lambda m: 1.0)


def inner_H1(u: SpectralField, v: SpectralField) -> float:
    """The gradient pairing ``((u, v))``."""
    return _weighted(u, v, lambda m: wavenumbers(m)[2])


def inner_V(u: SpectralField, v: SpectralField, alpha: float) -> float:
    return _weighted(u, v, lambda m: v_weight(m, alpha))


def inner_W(u: SpectralField, v: SpectralField, alpha: float) -> float:
    return _weighted(u, v, lambda m: w_weight(m, alpha))


def seminorm_H1(u: SpectralField) -> float:
    return float(np.sqrt(max(inner_H1(u, u), 0.0)))


def norm_V(u: SpectralField, alpha: float) -> float:
    return float(np.sqrt(max(inner_V(u, u, alpha), 0.0)))


def norm_W(u: SpectralField, alpha: float) -> float:
    return float(np.sqrt(max(inner_W(u, u, alpha), 0.0)))


def norm_Wstar(u: SpectralField, alpha: float) -> float:
    """Dual norm ``sup <u, w>_V / |w|_W`` over the truncated span.

    With the V pairing the per-mode weight is ``(1+alpha|k|^2)^2 / w_k``,
    which simplifies to ``1/|k|^2``.
    """
    ksq = wavenumbers(u.n)[2]
    weight = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    return float(np.sqrt(np.sum(weight * np.abs(u.coeffs) ** 2)))


def random_field(rng: np.random.Generator, n: int, decay: float = 0.0, scale: float = 1.0) -> SpectralField:
    """Random real field with coefficients ``~ scale * exp(-decay |k|) * N(0,1)_C``."""
    kabs = wavenumbers(n)[3]
    z = rng.standard_normal((2 * n + 1, 2 * n + 1)) + 1j * rng.standard_normal((2 * n + 1, 2 * n + 1))
    z = z * scale * np.exp(-decay * kabs)
    # enforce c[-k] = -conj(c[k])
    c = 0.5 * (z - np.conj(z[::-1, ::-1]))
    return SpectralField(n, c)


def to_physical(u: SpectralField, grid: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Velocity components on a uniform ``grid x grid`` mesh of ``[0, 2pi)^2``."""
    n = u.n
    L = grid or (2 * n + 1)
    if L < 2 * n + 1:
        raise ValueError(f"grid {L} too small to represent cutoff {n}")
    _, _, _, _, p1, p2, _ = wavenumbers(n)
    out = []
    for p in (p1, p2):
        full = np.zeros((L, L), dtype=complex)
        k = np.arange(-n, n + 1) % L
        full[np.ix_(k, k)] = u.coeffs * p
        out.append(np.real(np.fft.ifft2(full)) * L * L / (2 * np.pi))
    return out[0], out[1]


# -- serialization ---------------------------------------------------------

_MAGIC = b"SGFF"
_HEADER = struct.Struct("<4sIId")
_RECORD = struct.Struct("<iidd")


def save_field(u: SpectralField, alpha: float) -> bytes:
    """Binary layout: header ``(magic, version=1, n, alpha)`` then one
    little-endian record ``(int32 k1, int32 k2, float64 re, float64 im)`` per
    stored wavevector in row-major ``(k1, k2)`` order."""
    buf = io.BytesIO()
    buf.write(_HEADER.pack(_MAGIC, 1, u.n, float(alpha)))
    n = u.n
    for i in range(2 * n + 1):
        for j in range(2 * n + 1):
            if i == n and j == n:
                continue
            c = u.coeffs[i, j]
            buf.write(_RECORD.pack(i - n, j - n, c.real, c.imag))
    return buf.getvalue()


def load_field(data: bytes) -> tuple[SpectralField, float]:
    magic, version, n, alpha = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC or version != 1:
        raise ValueError("not a spectral field record")
    expected = _HEADER.size + ((2 * n + 1) ** 2 - 1) * _RECORD.size
    if len(data) != expected:
        raise ValueError(f"truncated field record: {len(data)} bytes, expected {expected}")
    c = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
    for k1, k2, re, im in _RECORD.iter_unpack(data[_HEADER.size :]):
        c[k1 + n, k2 + n] = complex(re, im)
    return SpectralField(n, c), alpha


def field_to_csv(u: SpectralField, alpha: float) -> str:
    """CSV with a ``# n=<n>,alpha=<alpha>`` header line and rows ``k1,k2,re,im``.

    Floats are written with ``repr`` so the round trip is bit-exact.
    """
    n = u.n
    lines = [f"# n={n},alpha={float(alpha)!r}", "k1,k2,re,im"]
    for i in range(2 * n + 1):
        for j in range(2 * n + 1):
            if i == n and j == n:
                continue
            c = u.coeffs[i, j]
            lines.append(f"{i - n},{j - n},{float(c.real)!r},{float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def field_from_csv(text: str) -> tuple[SpectralField, float]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError("missing field header line")
    meta = dict(item.split("=", 1) for item in lines[0][2:].split(","))
    n = int(meta["n"])
    alpha = float(meta["alpha"])
    c = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
    for line in lines[2:]:
        if not line.strip():
            continue
        k1, k2, re, im = line.split(",")
        c[int(k1) + n, int(k2) + n] = complex(float(re), float(im))
    return SpectralField(n, c), alpha
