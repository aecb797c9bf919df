"""Run configuration: INI parsing, validation, and canonical hashing.

A run is described by a flat INI file with typed sections.  Every key has
a default, so an empty (or absent) file is a valid configuration; the CLI
layers file values over the defaults and command-line flags over both.
The fully resolved configuration is what gets hashed and echoed into
report sidecars, so two runs with byte-identical resolved configs are
comparable even when their input files differ in layout.

Validation is strict: unknown sections or keys, malformed numbers, and
out-of-range physics parameters all raise ConfigError with a message
naming the offending key and the violated bound.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields
from typing import Tuple

import numpy as np

from .errors import ConfigError
from .potential import (PotentialModel, anisotropic, bump, constant,
                        coulomb_symmetric)

__all__ = ["RunConfig", "load_config", "parse_config", "resolved_text",
           "resolved_dict", "config_digest"]


_PROFILES = ("coulomb", "anisotropic", "bump", "constant")
_X_SCALES = ("log", "linear")
_LEMMAS = ("stationary", "degenerate", "flat")


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one CLI invocation.

    Field names match the INI keys one to one; the section is recorded in
    each field's metadata so the resolved text can be regenerated in the
    file format.  All fields are plain scalars or tuples, hashable and
    JSON-friendly.
    """

    # [potential]
    profile: str = field(default="coulomb", metadata={"section": "potential"})
    c: float = field(default=1.0, metadata={"section": "potential"})
    mu: float = field(default=1.0, metadata={"section": "potential"})
    c_left: float = field(default=2.0, metadata={"section": "potential"})
    c_right: float = field(default=1.0, metadata={"section": "potential"})
    blend_width: float = field(default=1.0, metadata={"section": "potential"})
    bump_height: float = field(default=2.0, metadata={"section": "potential"})
    r0: float = field(default=2.0, metadata={"section": "potential"})

    # [grids]
    lam_min: float = field(default=0.05, metadata={"section": "grids"})
    lam_max: float = field(default=4.0, metadata={"section": "grids"})
    lam_count: int = field(default=40, metadata={"section": "grids"})
    x_scale: str = field(default="log", metadata={"section": "grids"})
    x_min: float = field(default=-10.0, metadata={"section": "grids"})
    x_max: float = field(default=10.0, metadata={"section": "grids"})
    x_count: int = field(default=21, metadata={"section": "grids"})
    x_inner: float = field(default=0.5, metadata={"section": "grids"})
    x_outer: float = field(default=200.0, metadata={"section": "grids"})
    x_per_side: int = field(default=8, metadata={"section": "grids"})
    t_list: Tuple[float, ...] = field(
        default=(1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0),
        metadata={"section": "grids"})

    # [tolerances]
    quad_tol: float = field(default=1e-8, metadata={"section": "tolerances"})
    ode_tol: float = field(default=1e-8, metadata={"section": "tolerances"})
    osc_tol: float = field(default=1e-9, metadata={"section": "tolerances"})
    kernel_tol: float = field(default=1e-3, metadata={"section": "tolerances"})

    # [oracle]
    half_width: float = field(default=200.0, metadata={"section": "oracle"})
    spacing: float = field(default=0.05, metadata={"section": "oracle"})

    # [regime]
    radius: float = field(default=32.0, metadata={"section": "regime"})

    # [density]
    pair_x: float = field(default=3.0, metadata={"section": "density"})
    pair_xp: float = field(default=0.0, metadata={"section": "density"})

    # [jost]
    jost_lam: float = field(default=1.0, metadata={"section": "jost"})

    # [lemma]
    family: str = field(default="stationary", metadata={"section": "lemma"})
    sweep: Tuple[float, ...] = field(
        default=(1e2, 1e3, 1e4), metadata={"section": "lemma"})

    # [scan]
    bound_factor: float = field(default=3.0, metadata={"section": "scan"})
    box_half_width: float = field(default=5.0, metadata={"section": "scan"})
    box_count: int = field(default=13, metadata={"section": "scan"})

    # -- derived views ------------------------------------------------------

    def model(self) -> PotentialModel:
        if self.profile == "coulomb":
            return coulomb_symmetric(self.c, self.mu)
        if self.profile == "anisotropic":
            return anisotropic(self.c_left, self.c_right,
                               blend_width=self.blend_width, mu=self.mu)
        if self.profile == "bump":
            return bump(self.c, self.mu, bump_height=self.bump_height,
                        r0=self.r0)
        return constant(self.c)

    def lam_grid(self) -> np.ndarray:
        return np.geomspace(self.lam_min, self.lam_max, self.lam_count)

    def x_grid(self) -> np.ndarray:
        if self.x_scale == "log":
            from .propagator import signed_log_grid
            return signed_log_grid(self.x_inner, self.x_outer, self.x_per_side)
        return np.linspace(self.x_min, self.x_max, self.x_count)

    def validate(self) -> None:
        """Raise ConfigError naming the first violated bound."""
        if self.profile not in _PROFILES:
            raise ConfigError(
                f"potential.profile must be one of {', '.join(_PROFILES)}; "
                f"got {self.profile!r}")
        if self.profile != "constant" and not 0.0 < self.mu < 2.0:
            raise ConfigError(
                f"potential.mu must lie in the open interval (0, 2); "
                f"got {self.mu:g}")
        for key in ("c", "c_left", "c_right", "blend_width", "r0"):
            if getattr(self, key) <= 0.0:
                raise ConfigError(
                    f"potential.{key} must be positive; got "
                    f"{getattr(self, key):g}")
        if self.bump_height < 0.0:
            raise ConfigError(
                f"potential.bump_height must be nonnegative; got "
                f"{self.bump_height:g}")
        for key in ("quad_tol", "ode_tol", "osc_tol", "kernel_tol"):
            if getattr(self, key) <= 0.0:
                raise ConfigError(
                    f"tolerances.{key} must be positive; got "
                    f"{getattr(self, key):g}")
        if not 0.0 < self.lam_min < self.lam_max:
            raise ConfigError(
                "grids.lam_min and grids.lam_max must satisfy "
                f"0 < lam_min < lam_max; got {self.lam_min:g}, {self.lam_max:g}")
        if self.lam_count < 2:
            raise ConfigError(
                f"grids.lam_count must be at least 2; got {self.lam_count}")
        if self.x_scale not in _X_SCALES:
            raise ConfigError(
                f"grids.x_scale must be one of {', '.join(_X_SCALES)}; "
                f"got {self.x_scale!r}")
        if self.x_scale == "linear" and not self.x_min < self.x_max:
            raise ConfigError(
                "grids.x_min must be below grids.x_max; got "
                f"{self.x_min:g}, {self.x_max:g}")
        if self.x_scale == "log" and not 0.0 < self.x_inner < self.x_outer:
            raise ConfigError(
                "grids.x_inner and grids.x_outer must satisfy "
                f"0 < inner < outer; got {self.x_inner:g}, {self.x_outer:g}")
        if min(self.x_count, self.x_per_side) < 1:
            raise ConfigError("grids.x_count and grids.x_per_side must be "
                              "at least 1")
        if not self.t_list:
            raise ConfigError("grids.t_list must not be empty")
        if any(t == 0.0 for t in self.t_list):
            raise ConfigError("grids.t_list entries must be nonzero; got 0")
        if self.half_width < 4.0 * self.spacing or self.spacing <= 0.0:
            raise ConfigError(
                "oracle.half_width and oracle.spacing must satisfy "
                f"0 < spacing << half_width; got {self.spacing:g}, "
                f"{self.half_width:g}")
        if self.radius <= 0.0:
            raise ConfigError(
                f"regime.radius must be positive; got {self.radius:g}")
        if self.family not in _LEMMAS:
            raise ConfigError(
                f"lemma.family must be one of {', '.join(_LEMMAS)}; "
                f"got {self.family!r}")
        if len(self.sweep) < 2 or any(m < 10.0 for m in self.sweep):
            raise ConfigError(
                "lemma.sweep needs at least two window sizes, all >= 10")
        if self.bound_factor < 1.0:
            raise ConfigError(
                f"scan.bound_factor must be at least 1; got "
                f"{self.bound_factor:g}")
        if self.box_half_width <= 0.0 or self.box_count < 3:
            raise ConfigError(
                "scan.box_half_width must be positive and scan.box_count "
                f"at least 3; got {self.box_half_width:g}, {self.box_count}")


def _coerce(name, kind, raw):
    raw = raw.strip()
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            # reject silent truncation of "40.5"
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        if kind is str:
            return raw
        # tuple-of-floats list field, comma separated
        parts = [p for p in raw.replace(" ", "").split(",") if p]
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"could not parse {name} = {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Build a validated RunConfig from INI text layered over defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config file is not valid INI: {exc}") from None

    spec = {}
    for f in fields(RunConfig):
        ini_key = "lam" if f.name == "jost_lam" else f.name
        spec[(f.metadata["section"], ini_key)] = f

    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            f = spec.get((section, key))
            if f is None:
                known = sorted(k for s, k in spec if s == section)
                if not known:
                    raise ConfigError(f"unknown config section [{section}]")
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]; known keys: "
                    + ", ".join(known))
            kind = type(f.default)
            values[f.name] = _coerce(f"{section}.{key}", kind, raw)

    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_config(path=None) -> RunConfig:
    """Read and validate a config file; None gives the defaults."""
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text)


def resolved_text(cfg: RunConfig) -> str:
    """Canonical INI rendering of the fully resolved configuration.

    Keys appear in declaration order inside declaration-ordered sections,
    floats in repr precision, lists comma separated.  This string is the
    hashing and sidecar format, so its layout is frozen.
    """
    out = io.StringIO()
    current = None
    for f in fields(RunConfig):
        section = f.metadata["section"]
        if section != current:
            if current is not None:
                out.write("\n")
            out.write(f"[{section}]\n")
            current = section
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            rendered = ", ".join(f"{v:.12g}" for v in val)
        elif isinstance(val, float):
            rendered = f"{val:.12g}"
        else:
            rendered = str(val)
        ini_key = "lam" if f.name == "jost_lam" else f.name
        out.write(f"{ini_key} = {rendered}\n")
    return out.getvalue()


def resolved_dict(cfg: RunConfig) -> dict:
    """Resolved configuration as {section: {key: value}} for JSON echoes."""
    out: dict = {}
    for f in fields(RunConfig):
        ini_key = "lam" if f.name == "jost_lam" else f.name
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            val = list(val)
        out.setdefault(f.metadata["section"], {})[ini_key] = val
    return out


def config_digest(cfg: RunConfig) -> str:
    """Short stable hash of the resolved configuration."""
    return hashlib.sha256(resolved_text(cfg).encode()).hexdigest()[:16]
