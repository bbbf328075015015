"""Closed-form solutions and decay envelopes for ``phi' = -|phi|^(beta-1) phi``."""

import math

import numpy as np

from .errors import InvalidArgument


def _check_beta(beta):
    if not beta > 1.0:
        raise InvalidArgument(f"beta must be > 1, got {beta}")


def exact_solution(phi0, beta, t):
    """Solution of ``phi' = -|phi|^(beta-1) phi`` at time ``t`` from ``phi0``.

    ``sign(phi0) (|phi0|^-(beta-1) + (beta-1) t)^(-1/(beta-1))``, with 0 mapped
    to 0. Broadcasts over array arguments. For the drift ``-k1 |u|^(beta-1) u``
    evaluate at time ``k1 * t``.
    """
    _check_beta(beta)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidArgument("t must be nonnegative")
    phi0 = np.asarray(phi0, dtype=float)
    a = np.abs(phi0)
    c = (beta - 1.0) * t
    e = -1.0 / (beta - 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        # two algebraically equal forms; each is the stable one on its side of |phi0| = 1
        lo = phi0 * (1.0 + c * a ** (beta - 1.0)) ** e
        hi = np.copysign((a ** (1.0 - beta) + c) ** e, phi0)
    out = np.where(a <= 1.0, lo, hi)
    out = np.where(a == 0.0, 0.0 * phi0, out)
    return out if out.ndim else float(out)


def decay_envelope(u0_sup, beta, k1, t):
    """``(3/2) (u0^-(beta-1) + k1 t / (2^beta (beta-1)))^(-1/(beta-1))``.

    Bounds the sup-norm of a solution whose stochastic part stays below a third
    of the solution's own size. ``u0_sup = inf`` gives :func:`uniform_bound`.
    """
    _check_beta(beta)
    u0 = np.asarray(u0_sup, dtype=float)
    if np.any(~(u0 > 0)):
        raise InvalidArgument("u0_sup must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidArgument("t must be nonnegative")
    rate = k1 / (2.0 ** beta * (beta - 1.0))
    with np.errstate(divide="ignore"):
        out = 1.5 * (u0 ** (1.0 - beta) + rate * t) ** (-1.0 / (beta - 1.0))
    return out if np.ndim(out) else float(out)


def uniform_bound(beta, k1, t):
    """Initial-data-free envelope ``(3/2) (k1 t / (2^beta (beta-1)))^(-1/(beta-1))``."""
    _check_beta(beta)
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise InvalidArgument("uniform bound diverges at t = 0")
    out = 1.5 * (k1 * t / (2.0 ** beta * (beta - 1.0))) ** (-1.0 / (beta - 1.0))
    return out if out.ndim else float(out)


def table(beta, k1, phi0, times):
    """Rows ``(t, exact, envelope, uniform)`` for the ``ode`` CLI subcommand."""
    rows = []
    for t in times:
        uni = uniform_bound(beta, k1, t) if t > 0 else math.inf
        rows.append((float(t), exact_solution(phi0, beta, k1 * t),
                     decay_envelope(abs(phi0), beta, k1, t), uni))
    return rows
