"""Flat key-value run configuration.

Format: one ``key = value`` per line, ``#`` starts a comment, blank lines
ignored.  Unknown keys are rejected so typos surface immediately.
"""

import math
from pathlib import Path

import numpy as np

from . import fields as fd, model
from .fields import Grid, RECT, ScalarField, TORUS
from .model import MaterialState
from .picard import FROZEN, UPDATED, PicardConfig


class ConfigError(ValueError):
    pass


_TWO_PI = 2.0 * math.pi

DEFAULTS = {
    "domain.mode": "torus",
    "domain.l1": _TWO_PI,
    "domain.l2": _TWO_PI,
    "grid.n1": 32,
    "grid.n2": 32,
    "params.alpha": 1.0,
    "params.beta": 1.0,
    "params.epsilon": 1.0,
    "params.eps0": 0.1,
    "closures.nu1": 0.375,
    "closures.nu2": 0.375,
    "closures.eta1": 0.25,
    "closures.eta2": 0.25,
    "potential": "double_well",
    "time.dt": 1e-3,
    "time.total": 0.1,
    "picard.window": 0.02,
    "picard.tol": 1e-10,
    "picard.max_iter": 50,
    "picard.mode": FROZEN,
    "init.kind": "equilibrium",
    "init.amplitude": 0.1,
    "init.file": "",
    "output.dir": "qins_out",
    "output.stride": 10,
    "seed": 1234,
}

_TYPES = {k: type(v) for k, v in DEFAULTS.items()}

_CHOICES = {
    "domain.mode": (TORUS, RECT),
    "potential": ("double_well",),
    "picard.mode": (FROZEN, UPDATED),
    "init.kind": ("equilibrium", "cosine", "file"),
}


def parse_config(path=None, overrides=None) -> dict:
    """Load a config file (optional) on top of the defaults."""
    cfg = dict(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            cfg[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        cfg[key] = _coerce(key, value)
    _validate(cfg)
    return cfg


def _coerce(key, value):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    t = _TYPES[key]
    try:
        if t is bool:
            return str(value).lower() in ("1", "true", "yes", "on")
        if t is int:
            return int(str(value))
        if t is float:
            return float(str(value))
        return str(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc


def _validate(cfg):
    for key, choices in _CHOICES.items():
        if cfg[key] not in choices:
            raise ConfigError(f"{key!r} must be one of {choices}, got {cfg[key]!r}")
    for key in ("domain.l1", "domain.l2", "time.dt", "time.total",
                "picard.window", "picard.tol", "params.epsilon", "params.eps0"):
        if cfg[key] <= 0:
            raise ConfigError(f"{key!r} must be positive")
    for key in ("grid.n1", "grid.n2"):
        if cfg[key] < 4 or cfg[key] % 2:
            raise ConfigError(f"{key!r} must be even and >= 4")
    if cfg["params.beta"] == 0:
        raise ConfigError(
            "params.beta must be nonzero: the matched-density regime is out of scope"
        )
    if cfg["init.kind"] == "file" and not cfg["init.file"]:
        raise ConfigError("init.file is required when init.kind = file")


def grid_from_config(cfg) -> Grid:
    return Grid(cfg["domain.mode"], (cfg["domain.l1"], cfg["domain.l2"]),
                (cfg["grid.n1"], cfg["grid.n2"]))


def params_from_config(cfg) -> model.PhysParams:
    return model.make_params(
        alpha=cfg["params.alpha"],
        beta=cfg["params.beta"],
        epsilon=cfg["params.epsilon"],
        eps0=cfg["params.eps0"],
        nu1=cfg["closures.nu1"],
        nu2=cfg["closures.nu2"],
        eta1=cfg["closures.eta1"],
        eta2=cfg["closures.eta2"],
        potential=cfg["potential"],
    )


def picard_from_config(cfg) -> PicardConfig:
    return PicardConfig(
        window_T=cfg["picard.window"],
        dt=cfg["time.dt"],
        tol=cfg["picard.tol"],
        max_iter=cfg["picard.max_iter"],
        coefficient_mode=cfg["picard.mode"],
    )


def initial_state_from_config(cfg, grid=None) -> MaterialState:
    from .snapshots import read_snapshot

    kind = cfg["init.kind"]
    if kind == "file":
        return read_snapshot(cfg["init.file"])
    if grid is None:
        grid = grid_from_config(cfg)
    amp = cfg["init.amplitude"]
    if kind == "equilibrium":
        return MaterialState(fd.zero_vector(grid), fd.constant(grid, amp))
    x1, _ = grid.mesh()
    period = 1.0 if grid.mode == RECT else 2.0
    c = ScalarField(grid, amp * np.cos(period * np.pi * x1 / grid.lengths[0]))
    return MaterialState(fd.zero_vector(grid), c)
