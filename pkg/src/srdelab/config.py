"""Flat ``key = value`` run configuration.

Every key of :class:`RunConfig` may appear at most once; unknown keys are an
error. ``#`` and ``;`` start comments. Lists are comma separated, ``inf``
spells an infinite ``rho``, and an empty value leaves an optional key unset.

``dt``, ``horizon`` and ``scheme`` are shared by the ``sde`` and SPDE
subcommands; left unset, each subcommand uses its own default.
"""

import configparser
import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields

from .errors import ConfigError

REQUIRED = ("beta", "gamma")
_SECTION = "run"


@dataclass(frozen=True)
class RunConfig:
    # model
    beta: float = 3.0
    gamma: float = 1.5
    k1: float = 1.0
    k2: float = 1.0
    c0: float = 1.0
    drift: str = "power_dissipative"
    diffusion: str = "polynomial"
    # basis
    domain_length: float = math.pi
    num_modes: int = 64
    grid_size: int = None
    # noise: white, power-law or the path of an index,lambda CSV
    lambdas: str = "white"
    delta: float = 2.0
    rho: float = math.inf
    theta: float = 0.6
    # SPDE solver
    noise_modes: int = None
    dt: float = None
    horizon: float = None
    explosion_threshold: float = None
    scheme: str = None
    ladder_enabled: bool = True
    record_every: int = 10
    u0_amplitude: float = 5.0
    u0_mode: int = 1
    # sweeps and Monte Carlo
    beta_values: tuple = (3.0, 6.0)
    gamma_values: tuple = (1.2, 1.5, 2.0)
    trials: int = 200
    master_seed: int = 0
    workers: int = 1
    # SDE
    dimension: int = 1
    x0: tuple = None
    exit_radius: float = 1e3
    # ODE table
    phi0: float = 100.0
    times: tuple = (0.0, 0.1, 1.0, 10.0)
    # stochastic convolution
    alpha: float = 0.2
    zeta: float = 0.2
    p: float = 2.0
    rule: str = "product"
    horizons: tuple = (0.0625, 0.125, 0.25, 0.5)

    def to_text(self):
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.blake2b(self.to_text().encode(), digest_size=8).hexdigest()


def _format(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_FLOAT_TUPLES = {"beta_values", "gamma_values", "x0", "times", "horizons"}
_OPTIONAL = {f.name for f in fields(RunConfig) if f.default is None}


def _parse_scalar(key, kind, text):
    if kind is float:
        v = float(text)
        if math.isnan(v):
            raise ValueError("nan")
        return v
    if kind is int:
        return int(text)
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(text)
    return text


def _convert(key, text):
    text = text.strip()
    if text == "":
        if key in _OPTIONAL:
            return None
        raise ConfigError(f"key {key!r} needs a value", key=key)
    kind = _TYPES[key]
    try:
        if key in _FLOAT_TUPLES:
            return tuple(_parse_scalar(key, float, x.strip()) for x in text.split(","))
        return _parse_scalar(key, kind, text)
    except ValueError:
        expected = ("comma-separated list of numbers" if key in _FLOAT_TUPLES
                    else {float: "number", int: "integer", bool: "boolean"}.get(kind, "string"))
        raise ConfigError(f"key {key!r} expects a {expected}, got {text!r}", key=key) from None


def parse_config(text, source="<string>"):
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"), strict=True,
                                       default_section="__defaults__")
    try:
        parser.read_string(f"[{_SECTION}]\n" + text, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"key {exc.option!r} given twice in {source}", key=exc.option) from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {source}: {exc.message}") from None
    if parser.sections() != [_SECTION]:
        raise ConfigError(f"section headers are not allowed in {source}")
    items = dict(parser.items(_SECTION))
    for key in items:
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r} in {source}", key=key)
    for key in REQUIRED:
        if key not in items:
            raise ConfigError(f"required key {key!r} missing from {source}", key=key)
    return RunConfig(**{k: _convert(k, v) for k, v in items.items()})


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", key=None) from exc
    return parse_config(text, source=str(path))


def save_config(config, path):
    with open(path, "w") as fh:
        fh.write(config.to_text())


def with_overrides(config, **kw):
    return dataclasses.replace(config, **{k: v for k, v in kw.items() if v is not None})
