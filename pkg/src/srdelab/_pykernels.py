"""Pure-Python/NumPy reference implementations of the hot kernels.

Every function here has a twin with the identical signature in the compiled
``_ckernels`` extension. The selector in :mod:`srdelab.kernels` picks one at
import time.
"""

import math

import numpy as np

DRIFT_POWER = 0
DRIFT_ZERO = 1
DIFF_POLYNOMIAL = 0
DIFF_ADDITIVE = 1

EXIT_NONE = 0
EXIT_RADIUS = 1
EXIT_NONFINITE = 2


def drift_flow(u, beta, k1, dt):
    """Advance ``du/dt = -k1 |u|^(beta-1) u`` exactly by ``dt``, in place."""
    c = k1 * (beta - 1.0) * dt
    e = -1.0 / (beta - 1.0)
    a = np.abs(u)
    small = a <= 1.0
    with np.errstate(divide="ignore", over="ignore"):
        lo = u * np.power(1.0 + c * np.power(a, beta - 1.0), e)
        hi = np.copysign(np.power(np.power(a, 1.0 - beta) + c, e), u)
    u[...] = np.where(small, lo, hi)
    return u


def noise_term(v, dw, out, gamma, k2, diffusion_kind):
    """out = sigma(v) * dw."""
    if diffusion_kind == DIFF_ADDITIVE:
        np.multiply(dw, k2, out=out)
    else:
        np.multiply(k2 * (1.0 + np.power(np.abs(v), gamma)), dw, out=out)
    return out


def tamed_bracket(u, dw, out, beta, k1, gamma, k2, dt, drift_kind, diffusion_kind):
    """out = u + dt f(u) / (1 + dt |f(u)|) + sigma(u) dw."""
    noise_term(u, dw, out, gamma, k2, diffusion_kind)
    if drift_kind == DRIFT_POWER:
        f = -k1 * np.power(np.abs(u), beta - 1.0) * u
        out += dt * f / (1.0 + dt * np.abs(f))
    out += u
    return out


def _level(c0, k):
    return c0 * 3.0 ** k


def ladder_scan(values, times, c0, started, n, prev):
    """Feed a block of sup-norm samples through the tripling ladder.

    Returns ``(started, n, prev, crossings)`` where crossings is a list of
    ``(t, direction, level_index)`` with direction +1 (up) or -1 (down).
    ``prev`` is NaN before the first sample has been seen.
    """
    out = []
    for i in range(len(values)):
        s = float(values[i])
        t = float(times[i])
        if not math.isfinite(s):
            break
        if not started:
            if math.isnan(prev):
                k = 1
                while _level(c0, k) < s:
                    k += 1
                if _level(c0, k) == s:
                    started, n = True, k
                    out.append((t, 1, k))
            elif s > prev:
                k = 1
                while _level(c0, k) <= prev:
                    k += 1
                if _level(c0, k) <= s:
                    started, n = True, k
                    out.append((t, 1, k))
            elif s < prev:
                k = 1
                while _level(c0, k + 1) < prev:
                    k += 1
                if s <= _level(c0, k) < prev:
                    started, n = True, k
                    out.append((t, -1, k))
        if started:
            while True:
                if s >= _level(c0, n + 1):
                    n += 1
                    out.append((t, 1, n))
                elif n >= 2 and s <= _level(c0, n - 1):
                    n -= 1
                    out.append((t, -1, n))
                else:
                    break
        prev = s
    return started, n, prev, out


def sde_advance(x, dB, active, exit_step, reason, step0, beta, gamma,
                drift_c, noise_c, dt, radius, tamed, path):
    """Step a batch of SDE states through ``dB.shape[1]`` increments.

    ``x`` (B, d), ``dB`` (B, n, d); ``active``, ``exit_step`` and ``reason``
    are per-row and updated in place. ``path`` is (B, n, d) to record every
    post-step state, or has a zero-length second axis to skip recording.
    """
    record = path.shape[1] > 0
    n_steps = dB.shape[1]
    for i in range(n_steps):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        xs = x[rows]
        norm = np.sqrt(np.sum(xs * xs, axis=1))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            fc = np.where(norm > 0.0, -drift_c * np.power(norm, beta - 1.0), 0.0)
            if tamed:
                fnorm = np.abs(fc) * norm
                scale = dt / (1.0 + dt * fnorm)
            else:
                scale = dt
            g = noise_c * np.power(1.0 + norm, gamma)
            xn = xs + (scale * fc)[:, None] * xs + g[:, None] * dB[rows, i]
        x[rows] = xn
        if record:
            path[rows, i] = xn
        step = step0 + i + 1
        with np.errstate(invalid="ignore", over="ignore"):
            nsq = np.sum(xn * xn, axis=1)
        bad = ~np.isfinite(nsq)
        out = ~bad & (nsq > radius * radius)
        if bad.any():
            r = rows[bad]
            active[r] = 0
            reason[r] = EXIT_NONFINITE
            exit_step[r] = step
        if out.any():
            r = rows[out]
            active[r] = 0
            reason[r] = EXIT_RADIUS
            exit_step[r] = step
