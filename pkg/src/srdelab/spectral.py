"""Dirichlet eigenbasis, heat semigroup, noise spectrum and assumption checks.

The default basis is the sine basis of the Dirichlet Laplacian on ``(0, L)``:
``alpha_k = (k pi / L)^2`` and ``e_k(x) = sqrt(2/L) sin(k pi x / L)``. Grid
values live on the ``M`` interior points ``x_m = m L / (M + 1)``; with the
matching rectangle rule the discrete sine transform (DST-I) between grid and
coefficients is unitary up to the factor ``sqrt(L / (M + 1))``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import AssumptionViolation, InvalidArgument
from .model import dissipativity_margin

DIVERGENCE_REL_INCREMENT = 1e-3
DIVERGENCE_DECAY_EXPONENT = 1.05


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Eigenpairs of the Dirichlet operator, truncated to ``num_modes``.

    ``kind`` is ``"dirichlet_interval"`` for the built-in sine basis. Any other
    kind holds user-supplied ``(alpha_k, |e_k|_inf)`` arrays; such a basis can
    be fed to :func:`check_assumptions` but has no grid transforms.
    """

    domain_length: float
    num_modes: int
    eigenvalues: np.ndarray
    eigenfunction_sup_norms: np.ndarray
    grid_points: np.ndarray
    kind: str = "dirichlet_interval"

    @property
    def grid_size(self):
        return len(self.grid_points)

    @property
    def grid_spacing(self):
        return self.domain_length / (self.grid_size + 1)

    def mode_data(self, n):
        """``(alpha_k, |e_k|_inf)`` for ``k = 1..n`` (fewer for data-backed bases)."""
        if self.kind == "dirichlet_interval":
            k = np.arange(1, n + 1, dtype=float)
            alpha = (k * math.pi / self.domain_length) ** 2
            sup = np.full(n, math.sqrt(2.0 / self.domain_length))
            return alpha, sup
        return self.eigenvalues[:n], self.eigenfunction_sup_norms[:n]

    def eigenfunctions(self, x, n=None):
        """Matrix ``e_k(x_i)`` of shape ``(len(x), n)``."""
        self._require_interval()
        n = self.num_modes if n is None else n
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = np.arange(1, n + 1, dtype=float)
        scale = math.sqrt(2.0 / self.domain_length)
        return scale * np.sin(np.outer(x, k) * (math.pi / self.domain_length))

    def _require_interval(self):
        if self.kind != "dirichlet_interval":
            raise InvalidArgument("grid operations need the built-in interval basis")


def dirichlet_interval_basis(length=math.pi, num_modes=64, grid_size=None):
    """Sine eigenbasis on ``(0, length)`` with ``grid_size`` interior points.

    ``grid_size`` defaults to the smallest ``M >= 4 num_modes`` for which the
    DST-I length ``M + 1`` factors into small primes.
    """
    if not (length > 0 and math.isfinite(length)):
        raise InvalidArgument(f"length must be positive, got {length}")
    if int(num_modes) < 1:
        raise InvalidArgument(f"num_modes must be >= 1, got {num_modes}")
    num_modes = int(num_modes)
    if grid_size is None:
        grid_size = scipy.fft.next_fast_len(4 * num_modes + 1) - 1
    grid_size = int(grid_size)
    if grid_size < 4 * num_modes:
        raise InvalidArgument(
            f"grid_size must be >= 4 * num_modes = {4 * num_modes}, got {grid_size}")
    k = np.arange(1, num_modes + 1, dtype=float)
    eig = (k * math.pi / length) ** 2
    sup = np.full(num_modes, math.sqrt(2.0 / length))
    x = np.arange(1, grid_size + 1) * (length / (grid_size + 1))
    for a in (eig, sup, x):
        a.setflags(write=False)
    return SpectralBasis(float(length), num_modes, eig, sup, x)


def custom_basis(eigenvalues, sup_norms, domain_length=1.0):
    """Data-backed basis for general domains (assumption checking only)."""
    eig = np.asarray(eigenvalues, dtype=float)
    sup = np.asarray(sup_norms, dtype=float)
    if eig.shape != sup.shape or eig.ndim != 1 or eig.size == 0:
        raise InvalidArgument("eigenvalues and sup_norms must be equal-length 1-D arrays")
    if np.any(np.diff(eig) < 0):
        raise InvalidArgument("eigenvalues must be nondecreasing")
    return SpectralBasis(float(domain_length), eig.size, eig, sup, np.empty(0), kind="custom")


def semigroup_apply(basis, t, coeffs):
    """Apply ``S(t)``: multiply coefficient ``k`` by ``exp(-alpha_k t)``."""
    if t < 0:
        raise InvalidArgument(f"t must be nonnegative, got {t}")
    c = np.asarray(coeffs, dtype=float)
    n = c.shape[-1]
    if n > basis.num_modes:
        raise InvalidArgument(f"{n} coefficients exceed num_modes={basis.num_modes}")
    if t == 0:
        return c.copy()
    return c * np.exp(-basis.eigenvalues[:n] * t)


def heat_kernel(basis, t, x, y, truncation=None):
    """Truncated kernel ``K(t,x,y) = sum_k exp(-alpha_k t) e_k(x) e_k(y)``.

    ``x`` and ``y`` broadcast against each other.
    """
    if not t > 0:
        raise InvalidArgument(f"heat kernel needs t > 0, got {t}")
    n = basis.num_modes if truncation is None else int(truncation)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    L = basis.domain_length
    if np.any((x <= 0) | (x >= L) | (y <= 0) | (y >= L)):
        raise InvalidArgument("x and y must lie in the open interval")
    alpha, _ = basis.mode_data(n)
    ex = basis.eigenfunctions(x.ravel(), n)
    ey = basis.eigenfunctions(y.ravel(), n)
    val = (ex * ey) @ np.exp(-alpha * t)
    return val.reshape(x.shape) if x.ndim else float(val[0])


def forward_transform(basis, values):
    """Grid values ``(..., M)`` to the first ``N`` spectral coefficients."""
    basis._require_interval()
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != basis.grid_size:
        raise InvalidArgument(
            f"expected {basis.grid_size} grid values, got {v.shape[-1]}")
    c = scipy.fft.dst(v, type=1, norm="ortho", axis=-1)
    return c[..., :basis.num_modes] * math.sqrt(basis.grid_spacing)


def inverse_transform(basis, coeffs):
    """Spectral coefficients ``(..., K)``, ``K <= N``, to grid values ``(..., M)``."""
    basis._require_interval()
    c = np.asarray(coeffs, dtype=float)
    k = c.shape[-1]
    if k > basis.num_modes:
        raise InvalidArgument(f"{k} coefficients exceed num_modes={basis.num_modes}")
    padded = np.zeros(c.shape[:-1] + (basis.grid_size,))
    padded[..., :k] = c
    return scipy.fft.dst(padded, type=1, norm="ortho", axis=-1) / math.sqrt(basis.grid_spacing)


def dense_sup_norm(basis, coeffs, oversample=16):
    """Sup-norm of the function with the given coefficients, evaluated on a
    grid ``oversample`` times finer than the collocation grid."""
    c = np.asarray(coeffs, dtype=float)
    fine = dirichlet_interval_basis(
        basis.domain_length, c.shape[-1], oversample * (basis.grid_size + 1) - 1)
    return np.max(np.abs(inverse_transform(fine, c)), axis=-1)


# ---------------------------------------------------------------------------
# noise spectrum


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    """Noise coefficients ``lambda_j`` with summability exponents.

    ``kind`` is ``"white"`` (``lambda_j = 1``), ``"power-law"``
    (``lambda_j = j^-delta``) or ``"explicit"`` (the ``lambdas`` array, zero
    beyond its end). ``rho = math.inf`` selects the ``sup_j lambda_j < inf``
    branch of the summability condition.
    """

    kind: str = "white"
    rho: float = math.inf
    theta: float = 0.6
    delta: float = 0.0
    lambdas: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("white", "power-law", "explicit"):
            raise InvalidArgument(f"unknown spectrum kind {self.kind!r}")
        if self.kind == "explicit" and any(v < 0 for v in self.lambdas):
            raise InvalidArgument("lambdas must be nonnegative")

    def values(self, n):
        j = np.arange(1, n + 1, dtype=float)
        if self.kind == "white":
            return np.ones(n)
        if self.kind == "power-law":
            return j ** (-self.delta)
        out = np.zeros(n)
        m = min(n, len(self.lambdas))
        out[:m] = self.lambdas[:m]
        return out

    @property
    def is_zero(self):
        return self.kind == "explicit" and not any(self.lambdas)

    def to_dict(self):
        return {"kind": self.kind, "rho": self.rho, "theta": self.theta,
                "delta": self.delta, "lambdas": list(self.lambdas)}


def white_noise(theta=0.6):
    return NoiseSpectrum("white", math.inf, theta)


def power_law_noise(delta, rho=2.0, theta=0.6):
    return NoiseSpectrum("power-law", rho, theta, delta=delta)


def zero_noise():
    return NoiseSpectrum("explicit", 2.0, 1.0, lambdas=())


def load_spectrum_csv(path, rho=2.0, theta=0.6):
    """Read a two-column ``index,lambda`` CSV; a header row is optional."""
    pairs = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                j, lam = int(row[0]), float(row[1])
            except ValueError:
                if pairs:
                    raise InvalidArgument(f"malformed spectrum row {row!r} in {path}")
                continue
            if j < 1:
                raise InvalidArgument(f"spectrum indices start at 1, got {j}")
            pairs.append((j, lam))
    if not pairs:
        raise InvalidArgument(f"no spectrum rows in {path}")
    n = max(j for j, _ in pairs)
    lam = [0.0] * n
    for j, v in pairs:
        lam[j - 1] = v
    return NoiseSpectrum("explicit", rho, theta, lambdas=tuple(lam))


def compute_eta(spectrum):
    """``eta = theta (rho - 2) / rho``, equal to ``theta`` when ``rho`` is infinite."""
    rho, theta = spectrum.rho, spectrum.theta
    if not theta > 0:
        raise InvalidArgument(f"theta must be > 0, got {theta}")
    if not rho >= 2:
        raise InvalidArgument(f"rho must lie in [2, inf], got {rho}")
    eta = theta if math.isinf(rho) else theta * (rho - 2.0) / rho
    if eta >= 1.0:
        raise AssumptionViolation(f"eta = {eta:g} must be < 1", value=eta)
    return eta


# ---------------------------------------------------------------------------
# assumption report


@dataclass
class SeriesCheck:
    value: float
    diverges: bool
    partial_sum: float
    rel_increment: float
    decay_exponent: float


@dataclass
class AssumptionReport:
    eta: float
    lambda_sum_value: float
    lambda_sum_diverges: bool
    alpha_sum_value: float
    alpha_sum_diverges: bool
    gamma_beta_ok: bool
    gamma_beta_threshold: float
    drift_margin: float
    diagnostics: list

    @property
    def ok(self):
        return not any(d.startswith("FAIL") for d in self.diagnostics)

    def to_dict(self):
        def num(v):
            return None if v is None or not math.isfinite(v) else v
        return {
            "eta": num(self.eta),
            "lambda_sum_value": num(self.lambda_sum_value),
            "lambda_sum_diverges": self.lambda_sum_diverges,
            "alpha_sum_value": num(self.alpha_sum_value),
            "alpha_sum_diverges": self.alpha_sum_diverges,
            "gamma_beta_ok": self.gamma_beta_ok,
            "gamma_beta_threshold": num(self.gamma_beta_threshold),
            "drift_margin": num(self.drift_margin),
            "ok": self.ok,
            "diagnostics": list(self.diagnostics),
        }


def series_check(terms):
    """Partial sum of nonnegative ``terms`` with a divergence verdict.

    The sums at ``n/2`` and ``n`` terms are compared; the series is declared
    divergent when the relative increment exceeds 1e-3 and the terms decay no
    faster than ``k^-1.05``. A convergent series gets a power-law tail estimate
    added to its partial sum.
    """
    a = np.asarray(terms, dtype=float)
    n = a.size
    h = n // 2
    total = float(np.sum(a))
    half = float(np.sum(a[:h]))
    if not math.isfinite(total):
        return SeriesCheck(math.inf, True, total, math.inf, -math.inf)
    rel = (total - half) / total if total > 0 else 0.0
    w = max(1, n // 100)
    head = float(np.mean(a[h - w:h])) if h >= w else 0.0
    tail = float(np.mean(a[n - w:]))
    if tail == 0.0:
        return SeriesCheck(total, False, total, rel, math.inf)
    p = -math.log(tail / head) / math.log((n - w / 2) / (h - w / 2)) if head > 0 else -math.inf
    diverges = rel > DIVERGENCE_REL_INCREMENT and p <= DIVERGENCE_DECAY_EXPONENT
    if diverges:
        return SeriesCheck(math.inf, True, total, rel, p)
    value = total
    if p > 1.0:
        c = a[-1] * n ** p
        value += c * (n + 0.5) ** (1.0 - p) / (p - 1.0)
    return SeriesCheck(value, False, total, rel, p)


def check_assumptions(basis, spectrum, model, tail_terms=10**5):
    """Evaluate the structural hypotheses for ``(basis, spectrum, model)``.

    Never raises for a failing hypothesis; every outcome is recorded in
    ``diagnostics`` with a ``PASS``/``FAIL``/``NOTE`` prefix.
    """
    if tail_terms < 100:
        raise InvalidArgument(f"tail_terms must be >= 100, got {tail_terms}")
    diag = []
    alpha, sup = basis.mode_data(tail_terms)
    if alpha.size < tail_terms:
        diag.append(f"NOTE basis supplies {alpha.size} modes; sums truncated there")
    lam = spectrum.values(alpha.size)

    try:
        eta = compute_eta(spectrum)
        diag.append(f"PASS eta = {eta:g} < 1")
    except AssumptionViolation as exc:
        eta = exc.value
        diag.append(f"FAIL {exc}")
    except InvalidArgument as exc:
        eta = math.nan
        diag.append(f"FAIL {exc}")

    rho = spectrum.rho
    if math.isinf(rho):
        sup_lam = float(np.max(lam)) if lam.size else 0.0
        h = lam.size // 2
        growing = lam.size > 1 and lam[-1] > lam[h - 1] * (1 + DIVERGENCE_REL_INCREMENT)
        lam_div = growing or not math.isfinite(sup_lam)
        lam_value = math.inf if lam_div else sup_lam
        what = "sup_j lambda_j"
    else:
        chk = series_check(lam ** rho * sup ** 2)
        lam_div = chk.diverges
        lam_value = math.inf if lam_div else chk.value ** (2.0 / rho)
        what = f"(sum lambda_j^{rho:g} |e_j|^2)^(2/{rho:g})"
    diag.append(f"{'FAIL' if lam_div else 'PASS'} {what} "
                f"{'diverges' if lam_div else f'= {lam_value:.6g}'}")

    with np.errstate(divide="ignore"):
        a_terms = np.where(alpha > 0, alpha ** (-spectrum.theta), np.inf) * sup ** 2
    achk = series_check(a_terms)
    diag.append(f"{'FAIL' if achk.diverges else 'PASS'} sum alpha_k^-theta |e_k|^2 "
                f"{'diverges' if achk.diverges else f'= {achk.value:.6g}'}")

    threshold = 1.0 + (1.0 - eta) * (model.beta - 1.0) / 2.0 if math.isfinite(eta) else math.nan
    gb_ok = bool(eta < 1.0 and model.gamma < threshold)
    diag.append(f"{'PASS' if gb_ok else 'FAIL'} gamma = {model.gamma:g} "
                f"{'<' if gb_ok else '>='} {threshold:g} = 1 + (1 - eta)(beta - 1)/2")

    if model.gamma <= 1.0:
        diag.append(f"NOTE gamma = {model.gamma:g} <= 1: outside the super-linear regime studied")
    samples = np.concatenate([[-1.0, 1.0], np.geomspace(model.c0, model.c0 * 1e6, 200)])
    samples = np.concatenate([samples, -samples])
    margin = dissipativity_margin(model, samples)
    diag.append(f"{'PASS' if margin <= 0 else 'FAIL'} drift dissipativity margin = {margin:g}")

    return AssumptionReport(
        eta=eta,
        lambda_sum_value=lam_value,
        lambda_sum_diverges=bool(lam_div),
        alpha_sum_value=achk.value,
        alpha_sum_diverges=achk.diverges,
        gamma_beta_ok=gb_ok,
        gamma_beta_threshold=threshold,
        drift_margin=margin,
        diagnostics=diag,
    )
