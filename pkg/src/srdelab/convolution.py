"""Stochastic convolution, the factorization identity and its moment bounds.

All paths live in coefficient space with shape ``(B, n + 1, N)`` for ``B``
replays on the uniform time grid ``t_i = i dt``. Noise is replayed from
objects with a ``block(n)`` method returning standard normals of shape
``(B, n, J)`` (see :mod:`srdelab.rng`); two stream objects built from the same
seeds drive identical Brownian paths.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.special as sc
import scipy.stats

from .errors import InvalidArgument
from .model import sigma_eval
from .spectral import compute_eta, forward_transform, inverse_transform

RULES = ("product", "midpoint")
_CHUNK = 512


@dataclass(frozen=True)
class ConvolutionConfig:
    """Parameters of the factorization experiments (spatial dimension 1).

    ``rule`` selects how ``(t-s)^(alpha-1) S(t-s)`` is integrated in
    :func:`factorization_reconstruct`: ``product`` integrates it exactly on
    each subinterval, ``midpoint`` samples it at subinterval midpoints.
    """

    alpha: float = 0.2
    zeta: float = 0.2
    p: float = 2.0
    dt: float = 1e-3
    horizon: float = 1.0
    rule: str = "product"

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidArgument(f"alpha must be > 0, got {self.alpha}")
        if not 0 < self.zeta < 2 * self.alpha:
            raise InvalidArgument(f"zeta must lie in (0, 2 alpha), got {self.zeta}")
        if not self.p >= 2:
            raise InvalidArgument(f"p must be >= 2, got {self.p}")
        if self.rule not in RULES:
            raise InvalidArgument(f"rule must be one of {RULES}")
        if not (0 < self.dt <= self.horizon):
            raise InvalidArgument("need 0 < dt <= horizon")

    @property
    def times(self):
        return uniform_times(self.dt, self.horizon)

    @property
    def sup_window_ok(self):
        """``p > max(1/zeta, 1/(alpha - zeta/2))``, needed for the sup-norm bound."""
        return self.p > max(1.0 / self.zeta, 1.0 / (self.alpha - self.zeta / 2))

    def check_window(self, eta):
        if not self.alpha < (1.0 - eta) / 2:
            raise InvalidArgument(
                f"alpha={self.alpha} outside (0, (1 - eta)/2) with eta={eta}")


def uniform_times(dt, horizon):
    n = int(round(horizon / dt))
    return np.arange(n + 1) * dt


def _grid_step(times):
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0:
        raise InvalidArgument("times must be a 1-D grid starting at 0")
    d = np.diff(t)
    dt = float(d.mean())
    if not dt > 0 or np.max(np.abs(d - dt)) > 1e-9 * dt:
        raise InvalidArgument("times must be uniformly spaced")
    return t, dt


def _window(alpha, spectrum):
    eta = compute_eta(spectrum)
    if not 0 < alpha < (1.0 - eta) / 2:
        raise InvalidArgument(f"alpha={alpha} outside (0, (1 - eta)/2) with eta={eta}")


def _increments(sigma_path, basis, spectrum, dt, xi, cutoff, start):
    """Coefficients of ``P_N[sigma_m * dW_m]``, shape ``(B, n, N)``.

    ``xi`` holds the normals for steps ``start .. start + n - 1``.
    """
    B, n, J = xi.shape
    N = basis.num_modes
    if J > N:
        raise InvalidArgument(f"noise width {J} exceeds num_modes {N}")
    coef = xi * (spectrum.values(J) * math.sqrt(dt))
    if np.ndim(sigma_path) == 0:
        g = np.zeros((B, n, N))
        g[..., :J] = float(sigma_path) * coef
    else:
        sig = np.asarray(sigma_path, dtype=float)
        sig = sig[..., start:start + n, :]
        g = forward_transform(basis, sig * inverse_transform(basis, coef))
    if cutoff is not None:
        c = np.asarray(cutoff, dtype=float)[..., start:start + n]
        g = g * c[..., None]
    return g


def _check_inputs(sigma_path, basis, n, cutoff):
    if np.ndim(sigma_path) != 0:
        s = np.asarray(sigma_path)
        if s.ndim not in (2, 3) or s.shape[-1] != basis.grid_size or s.shape[-2] < n:
            raise InvalidArgument(
                f"sigma_path must have shape (..., >= {n}, {basis.grid_size})")
    if cutoff is not None and np.shape(cutoff)[-1] < n:
        raise InvalidArgument(f"cutoff must cover {n} steps")


def stochastic_convolution_direct(sigma_path, basis, spectrum, times, noise, cutoff=None,
                                  keep=None):
    """``Z(t_n) = sum_{m<n} S(t_n - t_{m+1}) P_N[sigma_m dW_m]``.

    ``sigma_path`` is a scalar (constant ``sigma``) or grid fields of shape
    ``([B,] n, M)`` sampled at the left endpoints. ``cutoff`` (shape
    ``([B,] n)``) multiplies each increment, realising ``1_{s <= tau}``.
    ``keep`` selects the returned time indices (default: all).
    """
    t, dt = _grid_step(times)
    n = t.size - 1
    _check_inputs(sigma_path, basis, n, cutoff)
    keep = np.arange(n + 1) if keep is None else np.asarray(keep, dtype=int)
    decay = np.exp(-basis.eigenvalues * dt)
    z = None
    out = None
    done = 0
    while done < n:
        k = min(_CHUNK, n - done)
        xi = noise.block(k)
        g = _increments(sigma_path, basis, spectrum, dt, xi, cutoff, done)
        if z is None:
            B = g.shape[0]
            z = np.zeros((B, basis.num_modes))
            out = np.zeros((B, keep.size, basis.num_modes))
        for i in range(k):
            z = z * decay + g[:, i]
            hit = np.flatnonzero(keep == done + i + 1)
            if hit.size:
                out[:, hit] = z[:, None]
        done += k
    return out


def _causal_sum(kernel, h):
    """``out[:, n] = sum_{j<n} kernel[j] * h[:, n-1-j]`` for ``n = 0..len``.

    ``kernel`` is ``(n, N)``, ``h`` is ``(B, n, N)``; summed directly so that
    ``out[:, n]`` depends only on ``h[:, :n]`` bit-for-bit.
    """
    B, n, N = h.shape
    out = np.zeros((B, n + 1, N))
    rev = h[:, ::-1]
    for i in range(1, n + 1):
        out[:, i] = np.einsum("bjk,jk->bk", rev[:, n - i:], kernel[:i])
    return out


def z_alpha_path(sigma_path, basis, spectrum, alpha, times, noise, cutoff=None):
    """``Z_alpha(t_n) = sum_{m<n} (t_n - t_m)^-alpha S(t_n - t_{m+1}) P_N[sigma_m dW_m]``.

    Left-endpoint weights keep the last increment finite (weight ``dt^-alpha``).
    With a ``cutoff`` this is the stopped process, equal to the unstopped one
    up to and including the first step the cutoff switches off.
    """
    _window(alpha, spectrum)
    t, dt = _grid_step(times)
    n = t.size - 1
    _check_inputs(sigma_path, basis, n, cutoff)
    g = _increments(sigma_path, basis, spectrum, dt, noise.block(n), cutoff, 0)
    j = np.arange(n)[:, None]
    kernel = ((j + 1) * dt) ** (-alpha) * np.exp(-basis.eigenvalues[None, :] * j * dt)
    return _causal_sum(kernel, g)


def _product_weights(alpha, lam, dt, n):
    """``w[j, k] = int_{j dt}^{(j+1) dt} r^(alpha-1) exp(-lam_k r) dr`` exactly."""
    a = (np.arange(n)[:, None] * dt) * np.ones_like(lam)[None, :]
    b = a + dt
    lam = np.broadcast_to(lam, a.shape)
    w = np.empty(a.shape)
    zero = lam == 0
    w[zero] = (b[zero] ** alpha - a[zero] ** alpha) / alpha
    pos = ~zero
    la, lb, lp = lam[pos] * a[pos], lam[pos] * b[pos], lam[pos]
    scale = sc.gamma(alpha) * lp ** (-alpha)
    # difference of the regularised gamma functions, taken on the side where it is not close to 1
    lower = sc.gammainc(alpha, lb) - sc.gammainc(alpha, la)
    upper = sc.gammaincc(alpha, la) - sc.gammaincc(alpha, lb)
    w[pos] = scale * np.where(la > alpha, upper, lower)
    return w


def factorization_reconstruct(z_alpha, basis, alpha, times, rule="product"):
    """``Z(t) = (sin(pi alpha)/pi) int_0^t (t-s)^(alpha-1) S(t-s) Z_alpha(s) ds``.

    ``Z_alpha`` is taken constant on each subinterval at its right-endpoint
    value. ``rule="product"`` integrates the kernel exactly per subinterval;
    ``"midpoint"`` is the naive rule kept for comparison.
    """
    if not 0 < alpha < 1:
        raise InvalidArgument(f"alpha must lie in (0, 1), got {alpha}")
    if rule not in RULES:
        raise InvalidArgument(f"rule must be one of {RULES}")
    t, dt = _grid_step(times)
    n = t.size - 1
    za = np.asarray(z_alpha, dtype=float)
    squeeze = za.ndim == 2
    if squeeze:
        za = za[None]
    if za.shape[1:] != (n + 1, basis.num_modes):
        raise InvalidArgument(f"z_alpha must have shape ([B,] {n + 1}, {basis.num_modes})")
    lam = basis.eigenvalues
    if rule == "product":
        w = _product_weights(alpha, lam, dt, n)
    else:
        r = (np.arange(n)[:, None] + 0.5) * dt
        w = dt * r ** (alpha - 1) * np.exp(-lam[None, :] * r)
    out = math.sin(math.pi * alpha) / math.pi * _causal_sum(w, za[:, 1:])
    return out[0] if squeeze else out


def beta_constant(alpha, eta):
    """``B(1-a, a) = pi / sin(pi a)`` with ``a = 2 alpha + eta``."""
    a = 2.0 * alpha + eta
    if not 0 < a < 1:
        raise InvalidArgument(f"2 alpha + eta = {a} must lie in (0, 1)")
    return math.pi / math.sin(math.pi * a)


# ---------------------------------------------------------------------------
# moment experiments


def singular_integral(weights, dt, exponent):
    """``int_0^{t_n} (t_n - s)^-exponent g(s) ds`` for every ``n``.

    ``g`` is piecewise constant with value ``weights[m]`` on ``[t_m, t_{m+1})``;
    the kernel is integrated exactly.
    """
    g = np.asarray(weights, dtype=float)
    n = g.size
    j = np.arange(n + 1) * dt
    c = 1.0 - exponent
    k = (j[1:] ** c - j[:-1] ** c) / c
    out = np.zeros(n + 1)
    for i in range(1, n + 1):
        out[i] = np.dot(k[:i], g[i - 1::-1])
    return out


@dataclass
class MomentReport:
    times: np.ndarray
    lhs: np.ndarray
    lhs_stderr: np.ndarray
    rhs: np.ndarray
    ratio: np.ndarray
    isometry: np.ndarray = None
    log_slope: float = math.nan

    def rows(self):
        iso = self.isometry if self.isometry is not None else np.full(self.times.size, np.nan)
        return list(zip(self.times.tolist(), self.lhs.tolist(), self.rhs.tolist(),
                        self.ratio.tolist(), self.lhs_stderr.tolist(), iso.tolist()))


def driving_field(basis, sup_path):
    """``u(s, x) = m(s) sin(pi x / L)`` on the grid for a sup-norm path ``m``."""
    prof = np.sin(math.pi * basis.grid_points / basis.domain_length)
    return np.asarray(sup_path, dtype=float)[:, None] * prof[None, :]


def _isometry_constant_sigma(basis, spectrum, alpha, sigma, t):
    """Closed-form ``E|Z_alpha(t)|^2_{L^2}`` for constant ``sigma``.

    ``sum_k lambda_k^2 sigma^2 int_0^t r^(-2 alpha) exp(-2 alpha_k r) dr``.
    """
    lam = spectrum.values(basis.num_modes)
    a = 1.0 - 2.0 * alpha
    two = 2.0 * basis.eigenvalues
    t = np.asarray(t, dtype=float)[:, None]
    val = sc.gamma(a) * two ** (-a) * sc.gammainc(a, two * t)
    return sigma ** 2 * (val * lam ** 2).sum(axis=1)


def moment_bound_check(config, model, spectrum, basis, sup_path, trials, seed,
                       cutoff_time=None, noise_modes=None):
    """Monte Carlo ``E|Z~_alpha(t)|^p_{L^p}`` against the deterministic right side.

    The driving field is ``u(s) = m(s) sin(pi x/L)`` with ``m = sup_path`` given
    at the ``n`` left endpoints of the config's time grid. The right side is
    ``(int_0^t (t-s)^(-eta-2 alpha) |sigma(u(s))|_inf^2 1_{s<=tau} ds)^(p/2)``
    up to its unknown constant. ``isometry`` is the exact continuous-time
    second moment, filled when ``p = 2`` and ``sigma`` is constant.
    """
    from .rng import GaussianStreams, trial_seeds

    if trials < 100:
        raise InvalidArgument("moment_bound_check needs at least 100 trials")
    eta = compute_eta(spectrum)
    config.check_window(eta)
    t = config.times
    n = t.size - 1
    m = np.asarray(sup_path, dtype=float)
    if m.shape != (n,):
        raise InvalidArgument(f"sup_path must hold {n} values")
    sig = sigma_eval(model, driving_field(basis, m))
    sig_sup = np.max(np.abs(sig), axis=1)
    cutoff = None
    if cutoff_time is not None:
        cutoff = (t[:-1] <= cutoff_time).astype(float)
    constant = model.diffusion == "additive" or np.ptp(sig) == 0
    sigma_path = float(sig.flat[0]) if constant else sig
    J = basis.num_modes if noise_modes is None else int(noise_modes)
    h = basis.grid_spacing

    sums = np.zeros(n + 1)
    sq = np.zeros(n + 1)
    batch = 200
    for start in range(0, trials, batch):
        seeds = trial_seeds(seed, range(start, min(trials, start + batch)))
        za = z_alpha_path(sigma_path, basis, spectrum, config.alpha, t,
                          GaussianStreams(seeds, J), cutoff)
        v = h * np.sum(np.abs(inverse_transform(basis, za)) ** config.p, axis=2)
        sums += v.sum(axis=0)
        sq += (v ** 2).sum(axis=0)
    lhs = sums / trials
    var = np.maximum(sq / trials - lhs ** 2, 0.0)
    stderr = np.sqrt(var / max(trials - 1, 1))

    g = sig_sup ** 2 * (cutoff if cutoff is not None else 1.0)
    rhs = singular_integral(g, config.dt, eta + 2 * config.alpha) ** (config.p / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, 0.0)
    iso = None
    if config.p == 2 and constant and cutoff is None:
        iso = _isometry_constant_sigma(basis, spectrum, config.alpha, sigma_path, t)
    sel = (t >= 0.1 * t[-1]) & (rhs > 0) & (ratio > 0)
    slope = math.nan
    if sel.sum() >= 2:
        slope = float(np.polyfit(np.log(t[sel]), np.log(ratio[sel]), 1)[0])
    return MomentReport(t, lhs, stderr, rhs, ratio, iso, slope)


@dataclass
class ScalingFit:
    horizons: np.ndarray
    moments: np.ndarray
    slope: float
    ci_low: float
    ci_high: float
    prefactor_slope: float
    bound_slope: float
    trials: int

    @property
    def ci_width(self):
        return self.ci_high - self.ci_low

    def to_dict(self):
        return {"horizons": self.horizons.tolist(), "moments": self.moments.tolist(),
                "slope": self.slope, "ci": [self.ci_low, self.ci_high],
                "prefactor_slope": self.prefactor_slope, "bound_slope": self.bound_slope,
                "trials": self.trials}


def _loglog_slope(t, y):
    return np.polyfit(np.log(t), np.log(y), 1)[0]


def sup_moment_scaling(config, spectrum, basis, trials, horizons, seed, sigma=1.0,
                       noise_modes=None, confidence=0.95):
    """Fit ``log E sup_{s<=t} sup_x |Z(s,x)|^p`` against ``log t``.

    Uses constant ``sigma`` and one set of paths for all horizons. The
    confidence interval is a percentile bootstrap over trials.
    ``prefactor_slope`` is ``p (alpha - zeta/2)``; ``bound_slope`` is the
    exponent of the whole right side for constant ``sigma``,
    ``p (alpha - zeta/2) - 1 + 1 + p (1 - eta - 2 alpha)/2``.
    """
    from .rng import GaussianStreams, trial_seeds

    h = np.sort(np.asarray(horizons, dtype=float))
    if h.size < 4 or np.any(h <= 0):
        raise InvalidArgument("need at least 4 positive horizons")
    r = h[1:] / h[:-1]
    if np.max(np.abs(r - r[0])) > 1e-9 * r[0] or r[0] <= 1:
        raise InvalidArgument("horizons must form a geometric ladder")
    eta = compute_eta(spectrum)
    config.check_window(eta)
    t = uniform_times(config.dt, h[-1])
    idx = np.rint(h / config.dt).astype(int)
    if np.any(np.abs(idx * config.dt - h) > 1e-9 * h) or idx[0] < 1:
        raise InvalidArgument("horizons must be multiples of dt")
    J = basis.num_modes if noise_modes is None else int(noise_modes)
    sup_p = np.empty((trials, h.size))
    batch = 500
    for start in range(0, trials, batch):
        rows = range(start, min(trials, start + batch))
        z = stochastic_convolution_direct(sigma, basis, spectrum, t,
                                          GaussianStreams(trial_seeds(seed, rows), J))
        s = np.maximum.accumulate(np.max(np.abs(inverse_transform(basis, z)), axis=2), axis=1)
        sup_p[start:start + len(rows)] = s[:, idx] ** config.p
    moments = sup_p.mean(axis=0)
    if np.all(moments == 0):
        return ScalingFit(h, moments, math.nan, math.nan, math.nan,
                          config.p * (config.alpha - config.zeta / 2),
                          _bound_slope(config, eta), trials)
    slope = float(_loglog_slope(h, moments))

    def stat(i):
        return _loglog_slope(h, sup_p[i.astype(int)].mean(axis=0))

    res = scipy.stats.bootstrap((np.arange(trials),), stat, vectorized=False,
                                confidence_level=confidence, method="percentile",
                                n_resamples=999, random_state=np.random.default_rng(seed))
    ci = res.confidence_interval
    return ScalingFit(h, moments, slope, float(ci.low), float(ci.high),
                      config.p * (config.alpha - config.zeta / 2),
                      _bound_slope(config, eta), trials)


def _bound_slope(config, eta):
    return config.p * (1.0 - eta - config.zeta) / 2.0
