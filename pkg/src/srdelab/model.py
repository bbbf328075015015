"""Drift and diffusion coefficients of the reaction-diffusion equation."""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgument

DRIFT_KINDS = ("power_dissipative", "zero")
DIFFUSION_KINDS = ("polynomial", "additive")


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients ``f`` and ``sigma``.

    ``power_dissipative`` drift is ``f(u) = -k1 |u|^(beta-1) u``; ``zero`` drift
    is ``f = 0``. ``polynomial`` diffusion is ``sigma(u) = k2 (1 + |u|^gamma)``;
    ``additive`` diffusion is ``sigma = k2``.

    ``gamma`` may be anywhere in ``[0, inf)`` so that sub-linear diagnostic
    configurations can be built; the assumption checker reports them as outside
    the non-explosion conditions.
    """

    beta: float = 3.0
    gamma: float = 1.5
    k1: float = 1.0
    k2: float = 1.0
    c0: float = 1.0
    drift: str = "power_dissipative"
    diffusion: str = "polynomial"

    def __post_init__(self):
        if self.drift not in DRIFT_KINDS:
            raise InvalidArgument(f"drift must be one of {DRIFT_KINDS}, got {self.drift!r}")
        if self.diffusion not in DIFFUSION_KINDS:
            raise InvalidArgument(
                f"diffusion must be one of {DIFFUSION_KINDS}, got {self.diffusion!r}")
        if not self.beta > 1.0:
            raise InvalidArgument(f"beta must be > 1, got {self.beta}")
        if not self.gamma >= 0.0:
            raise InvalidArgument(f"gamma must be >= 0, got {self.gamma}")
        for name in ("k1", "k2", "c0"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise InvalidArgument(f"{name} must be positive and finite, got {v}")

    def to_dict(self):
        return asdict(self)


def drift_eval(model, u):
    """Pointwise drift ``f(u)``; accepts scalars or arrays."""
    u = np.asarray(u, dtype=float)
    if model.drift == "zero":
        out = np.zeros_like(u)
    else:
        out = -model.k1 * np.abs(u) ** (model.beta - 1.0) * u
    return out if out.ndim else float(out)


def sigma_eval(model, u):
    """Pointwise diffusion coefficient ``sigma(u)``."""
    u = np.asarray(u, dtype=float)
    if model.diffusion == "additive":
        out = np.full_like(u, model.k2)
    else:
        out = model.k2 * (1.0 + np.abs(u) ** model.gamma)
    return out if out.ndim else float(out)


def dissipativity_margin(model, samples):
    """Worst sampled value of ``f(u) sgn(u) + k1 |u|^beta`` over ``|u| > c0``.

    A nonpositive result means the sampled dissipativity check passes. When no
    sample lies outside ``[-c0, c0]`` the check is vacuous and ``-inf`` is
    returned.
    """
    u = np.asarray(samples, dtype=float).ravel()
    if u.size == 0:
        raise InvalidArgument("samples must be nonempty")
    u = u[np.abs(u) > model.c0]
    if u.size == 0:
        return -math.inf
    f = np.asarray(drift_eval(model, u))
    a = np.abs(u)
    # |u|^beta written as |u|^(beta-1)|u| to round like drift_eval
    return float(np.max(f * np.sign(u) + model.k1 * a ** (model.beta - 1.0) * a))
