"""Run configuration: an INI file with sections, parsed with line diagnostics.

Example::

    [physics]
    alpha = 1.0
    nu = 0.5
    sigma = 0.5
    T = 1.0
    N = 3.0

    [discretization]
    n = 8
    dt = 0.01
    r_stride = 8

    [force]
    kind = saturated
    gain = 0.5

    [init]
    kind = endpoint_functional
    g = sin
    f0_seed = 11
    f1_seed = 12
    decay = 1.0
    scale = 0.3

    [run]
    seeds = 0-99
    path = sampled

    [thresholds]
    order_min = 0.4

Any key of a study (levels, sample counts, tolerances) may be given in the
``[study]`` or ``[thresholds]`` section; unknown keys there are passed through
to the study, which validates them.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .operators import ForceSpec
from .solver import G_CATALOG, InitSpec, SolverConfig
from .spectral import SpectralField, random_field

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "parse_seeds", "parse_levels"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the file line when known."""


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0-99"``, ``"1,2,5"`` or a mix such as ``"0-3,10"``."""
    seeds: list[int] = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        m = re.fullmatch(r"(\d+)-(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return tuple(seeds)


def parse_levels(text: str) -> tuple[float, ...]:
    vals = tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)
    if not vals:
        raise ValueError("no levels given")
    return vals


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 1.0
    nu: float = 0.5
    sigma: float = 0.5
    T: float = 1.0
    N: float = 3.0
    n: int = 8
    dt: float = 0.01
    r_stride: int = 8
    grid: int | None = None
    nonlinear: bool = True
    force: ForceSpec = field(default_factory=ForceSpec)
    init_kind: str = "deterministic"
    init_g: str = "sin"
    f0_seed: int = 11
    f1_seed: int = 12
    init_decay: float = 1.0
    init_scale: float = 0.3
    seeds: tuple[int, ...] = (0,)
    path_kind: str = "sampled"
    scheme: str = "if-heun"
    out: str | None = None
    study: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("alpha", "nu", "T"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if not self.N > 0:
            raise ConfigError(f"N must be positive, got {self.N}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-12 * max(1.0, steps):
            raise ConfigError(f"dt={self.dt} does not divide T={self.T}")
        if self.r_stride < 1:
            raise ConfigError(f"r_stride must be >= 1, got {self.r_stride}")
        if self.init_kind not in ("deterministic", "endpoint_functional"):
            raise ConfigError(f"unknown init kind {self.init_kind!r}")
        if self.init_g not in G_CATALOG:
            raise ConfigError(f"unknown g {self.init_g!r}; expected one of {sorted(G_CATALOG)}")
        if self.path_kind not in ("sampled", "synthetic"):
            raise ConfigError(f"unknown path kind {self.path_kind!r}")
        if self.scheme != "if-heun":
            raise ConfigError(f"unknown scheme {self.scheme!r}; only 'if-heun' is implemented")

    @property
    def M(self) -> int:
        return int(round(self.T / self.dt))

    def solver(self, n: int | None = None) -> SolverConfig:
        return SolverConfig(
            alpha=self.alpha,
            nu=self.nu,
            n=self.n if n is None else n,
            force=self.force,
            grid=self.grid,
            nonlinear=self.nonlinear,
        )

    def base_field(self, seed: int, n: int | None = None) -> SpectralField:
        return random_field(np.random.default_rng(seed), self.n if n is None else n, self.init_decay, self.init_scale)

    def init_spec(self, kind: str | None = None, n: int | None = None) -> InitSpec:
        kind = kind or self.init_kind
        f0 = self.base_field(self.f0_seed, n)
        f1 = self.base_field(self.f1_seed, n) if kind == "endpoint_functional" else None
        return InitSpec(kind, f0, f1, self.init_g)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def snapshot(self) -> dict:
        """Flat, ordered description used in reports."""
        return {
            "alpha": self.alpha,
            "nu": self.nu,
            "sigma": self.sigma,
            "T": self.T,
            "N": self.N,
            "n": self.n,
            "dt": self.dt,
            "r_stride": self.r_stride,
            "grid": self.grid if self.grid is not None else 4 * self.n,
            "nonlinear": self.nonlinear,
            "force": f"{self.force.kind}:{self.force.gain!r}",
            "init": f"{self.init_kind}:{self.init_g}",
            "f0_seed": self.f0_seed,
            "f1_seed": self.f1_seed,
            "init_decay": self.init_decay,
            "init_scale": self.init_scale,
            "seeds": _seed_text(self.seeds),
            "path": self.path_kind,
            "scheme": self.scheme,
            **{f"study.{k}": v for k, v in sorted(self.study.items())},
        }


def _seed_text(seeds) -> str:
    seeds = list(seeds)
    if seeds == list(range(seeds[0], seeds[0] + len(seeds))):
        return f"{seeds[0]}-{seeds[-1]}" if len(seeds) > 1 else str(seeds[0])
    return ",".join(str(s) for s in seeds)


# key -> (section, RunConfig field, converter)
_SCHEMA = {
    ("physics", "alpha"): ("alpha", float),
    ("physics", "nu"): ("nu", float),
    ("physics", "sigma"): ("sigma", float),
    ("physics", "t"): ("T", float),
    ("physics", "n"): ("N", lambda s: math.inf if s.strip().lower() in ("inf", "infinity") else float(s)),
    ("discretization", "n"): ("n", int),
    ("discretization", "dt"): ("dt", float),
    ("discretization", "r_stride"): ("r_stride", int),
    ("discretization", "grid"): ("grid", int),
    ("discretization", "nonlinear"): ("nonlinear", "bool"),
    ("discretization", "scheme"): ("scheme", str),
    ("init", "kind"): ("init_kind", str),
    ("init", "g"): ("init_g", str),
    ("init", "f0_seed"): ("f0_seed", int),
    ("init", "f1_seed"): ("f1_seed", int),
    ("init", "decay"): ("init_decay", float),
    ("init", "scale"): ("init_scale", float),
    ("run", "seeds"): ("seeds", parse_seeds),
    ("run", "path"): ("path_kind", str),
    ("run", "out"): ("out", str),
}
_PASSTHROUGH = ("study", "thresholds")


def _line_map(text: str) -> dict:
    """(section, key) -> 1-based line number, for diagnostics."""
    where = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            continue
        if section is not None:
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            where[(section, key)] = i
    return where


def _study_value(text: str):
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    where = _line_map(text)
    kw: dict = {}
    force_kind, force_gain = "zero", 0.0
    study: dict = {}
    for section in parser.sections():
        sec = section.lower()
        for key, raw in parser.items(section):
            loc = f"{source}:{where.get((sec, key), '?')}"
            if sec in _PASSTHROUGH:
                study[key] = _study_value(raw)
                continue
            try:
                if sec == "force":
                    if key == "kind":
                        force_kind = raw.strip()
                    elif key == "gain":
                        force_gain = float(raw)
                    else:
                        raise KeyError(key)
                    continue
                target, conv = _SCHEMA[(sec, key)]
            except KeyError:
                raise ConfigError(f"{loc}: unknown key {key!r} in section [{section}]") from None
            try:
                if conv == "bool":
                    value = parser.getboolean(section, key)
                else:
                    value = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{loc}: bad value for {key!r}: {exc}") from None
            kw[target] = value
    try:
        kw["force"] = ForceSpec(force_kind, force_gain)
    except ValueError as exc:
        loc = f"{source}:{where.get(('force', 'kind'), '?')}"
        raise ConfigError(f"{loc}: {exc}") from None
    kw["study"] = study
    try:
        return RunConfig(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))
