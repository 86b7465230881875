"""
Run configuration files.

Grammar: ``key = value`` lines grouped under ``[section]`` headers, ``#``
comments.  Keys before the first header belong to ``[run]``.  Recognised
sections and keys are listed in ``SCHEMA``; anything else is an error.

Example::

    kind = twist6
    theta_deg = 2.5

    [admm]
    beta = 1.001
"""

import configparser
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from gbadmm.quasiconvexity import CertifierParams
from gbadmm.solvers import AugLagParams

__all__ = ["ConfigError", "RunConfig", "PenaltyParams", "load_config", "parse_config", "KINDS", "SOLVERS"]

KINDS = ("twist6", "reduced3", "certify", "epsilon0", "counterexample")
SOLVERS = ("admm", "alm", "penalty", "all")
PRESETS = ("auto", "fcc111", "three")
THETA_MAX_DEG = 15.0


class ConfigError(ValueError):
    """Malformed configuration text or a value violating a field invariant."""


@dataclass
class PenaltyParams:
    rho: float = 800.0
    alpha: float = 5e-4
    tol: float = 1e-8
    max_iter: int = 100_000


@dataclass
class RunConfig:
    kind: str = "twist6"
    theta_deg: float = 2.5
    preset: str = "auto"
    burgers: tuple = None
    nu: float = 0.347
    r_g_ratio: float = 0.85
    epsilon_ratio: float = 1 / 400
    axis: tuple = (0.0, 0.0, 1.0)
    normal: tuple = (0.0, 0.0, 1.0)
    solver: str = "all"
    out: str = "gbadmm_out"
    seed: int = 0
    threads: int = 1
    audit: bool = False
    admm: AugLagParams = field(default_factory=AugLagParams)
    alm: AugLagParams = field(default_factory=lambda: AugLagParams(beta=1.0))
    penalty: PenaltyParams = field(default_factory=PenaltyParams)
    certifier: CertifierParams = field(default_factory=CertifierParams)
    bracket: tuple = (1e-6, 1e-1)
    rtol: float = 1e-2
    betas: tuple = (1.0, 1.1)
    steps: int = 2000
    x0: tuple = (1.0, 1.0, 1.0)
    w0: tuple = (0.0, 0.0, 0.0)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: unknown experiment {self.kind!r}, expected one of {KINDS}")
        if not 0.0 < self.theta_deg <= THETA_MAX_DEG:
            raise ConfigError(f"theta_deg: {self.theta_deg} outside the low-angle range (0, 15]")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {self.preset!r}, expected one of {PRESETS}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver: unknown solver {self.solver!r}, expected one of {SOLVERS}")
        if not self.epsilon_ratio > 0:
            raise ConfigError("epsilon_ratio: must be positive")
        if not 0 <= self.nu < 0.5:
            raise ConfigError("nu: must lie in [0, 0.5)")
        if not self.r_g_ratio > 0:
            raise ConfigError("r_g_ratio: must be positive")
        if self.threads < 1:
            raise ConfigError("threads: must be >= 1")
        if self.steps < 1:
            raise ConfigError("steps: must be >= 1")
        lo, hi = self.bracket
        if not 0 < lo < hi:
            raise ConfigError("bracket: need 0 < lo < hi")
        if not 0 < self.rtol < 1:
            raise ConfigError("rtol: must lie in (0, 1)")
        if any(b < 1 for b in self.betas):
            raise ConfigError("betas: every beta must be >= 1")
        return self

    def describe(self):
        """``key = value`` lines echoing every parameter, for report headers."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("admm", "alm", "penalty", "certifier"):
                for g in fields(v):
                    lines.append(f"{f.name}.{g.name} = {getattr(v, g.name)!r}")
            else:
                lines.append(f"{f.name} = {v!r}")
        return "\n".join(lines)


def _floats(text, n=None):
    vals = tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {len(vals)}")
    return vals


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_RUN_KEYS = {
    "kind": str, "theta_deg": float, "preset": str, "nu": float, "r_g_ratio": float,
    "epsilon_ratio": float, "axis": lambda s: _floats(s, 3), "normal": lambda s: _floats(s, 3),
    "solver": str, "out": str, "seed": int, "threads": int, "audit": _bool,
}
_AUGLAG_KEYS = {
    "rho0": float, "beta": float, "alpha": float, "tol_inner": float, "tol_outer": float,
    "max_outer": int, "max_inner": int, "inner_patience": int, "line_search": _bool,
}
SCHEMA = {
    "run": _RUN_KEYS,
    "burgers": {f"b{i}": (lambda s: _floats(s, 3)) for i in range(1, 13)},
    "admm": _AUGLAG_KEYS,
    "alm": _AUGLAG_KEYS,
    "penalty": {"rho": float, "alpha": float, "tol": float, "max_iter": int},
    "certifier": {
        "p": float, "radius": float, "n_r": int, "n_phi": int, "fd_step": float,
        "bracket_lo": float, "bracket_hi": float, "rtol": float,
    },
    "counterexample": {
        "betas": _floats, "steps": int, "x0": lambda s: _floats(s, 3), "w0": lambda s: _floats(s, 3),
    },
}


def parse_config(text, source="<config>", kind=None):
    """
    Parse configuration text into a validated :class:`RunConfig`.

    ``kind``, when given, is the experiment requested by the caller; a file
    naming a different one is an error.
    """
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), interpolation=None)
    try:
        # one extra header line shifts reported line numbers by one
        cp.read_string("[run]\n" + text, source=source)
    except configparser.DuplicateSectionError as exc:
        # "[run]" written explicitly at the top is fine; merge it
        if exc.section == "run" and (exc.lineno or 0) <= 2:
            return parse_config(text.replace("[run]", "", 1), source, kind)
        raise ConfigError(f"{source}:{(exc.lineno or 1) - 1}: duplicate section [{exc.section}]") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{(exc.lineno or 1) - 1}: duplicate key {exc.option!r}") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{source}:{lineno - 1}: cannot parse {line.strip()!r}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        schema = SCHEMA[section]
        for key, raw in cp.items(section):
            if key not in schema:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            try:
                values[(section, key)] = schema[key](raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    if kind is not None:
        if values.get(("run", "kind"), kind) != kind:
            raise ConfigError(f"kind: config says {values[('run', 'kind')]!r} but {kind!r} was requested")
        values[("run", "kind")] = kind
    return _build(values)


def _build(values):
    cfg = RunConfig()
    run = {k: v for (s, k), v in values.items() if s == "run"}
    try:
        cfg = replace(cfg, **run)
        vecs = [values[("burgers", f"b{i}")] for i in range(1, 13) if ("burgers", f"b{i}") in values]
        if vecs:
            cfg.burgers = tuple(vecs)
        for name in ("admm", "alm"):
            over = {k: v for (s, k), v in values.items() if s == name}
            setattr(cfg, name, replace(getattr(cfg, name), **over))
        cfg.penalty = replace(cfg.penalty, **{k: v for (s, k), v in values.items() if s == "penalty"})
        cert = {k: v for (s, k), v in values.items() if s == "certifier"}
        lo = cert.pop("bracket_lo", cfg.bracket[0])
        hi = cert.pop("bracket_hi", cfg.bracket[1])
        cfg.bracket = (lo, hi)
        cfg.rtol = cert.pop("rtol", cfg.rtol)
        cfg.certifier = replace(cfg.certifier, **cert)
        ce = {k: v for (s, k), v in values.items() if s == "counterexample"}
        for k, v in ce.items():
            setattr(cfg, k, v)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if not all(math.isfinite(v) for v in np.ravel(cfg.axis + cfg.normal)):
        raise ConfigError("axis/normal: values must be finite")
    return cfg.validate()


def load_config(path, kind=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path), kind=kind)
