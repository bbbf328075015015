"""Spectral Galerkin time-stepping of the 1-D mild-solution SPDE.

State is held on the collocation grid of a :class:`SpectralBasis`; every step
projects back onto the first ``N`` sine modes, so grid values always equal
``inverse_transform(coeffs)``.

Two schemes are available:

``semi_implicit_split`` (default)
    Lie splitting: exact pointwise drift flow, then the heat semigroup, then an
    Euler step of the noise with ``sigma`` evaluated at the post-heat state.
``exponential_tamed``
    ``u <- S(dt) [u + dt f~(u) + sigma(u) dW]`` with the tamed drift
    ``f~ = f / (1 + dt |f|)``.

A trajectory is declared exploded once its grid sup-norm reaches the
threshold ``Mx`` (default ``1e6 c0``); non-finite values stop it as well.
"""

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .errors import ContractViolation, InvalidArgument
from .rng import GaussianStreams
from .spectral import forward_transform, inverse_transform

SCHEMES = ("semi_implicit_split", "exponential_tamed")
VERDICTS = ("survived_to_T", "exploded_at_t", "nonfinite_at_t")
_CHUNK = 256


@dataclass(frozen=True)
class SolverConfig:
    num_modes: int = 64
    grid_size: int = None
    noise_modes: int = None
    dt: float = 1e-4
    horizon: float = 1.0
    explosion_threshold: float = None
    scheme: str = "semi_implicit_split"
    ladder_enabled: bool = True
    record_every: int = 10

    @property
    def num_steps(self):
        return int(round(self.horizon / self.dt))

    def resolve(self, basis, model):
        """Fill defaults from ``basis`` and ``model`` and validate."""
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.num_modes != basis.num_modes:
            raise InvalidArgument(
                f"num_modes={self.num_modes} but basis has {basis.num_modes} modes")
        if self.grid_size is not None and self.grid_size != basis.grid_size:
            raise InvalidArgument(
                f"grid_size={self.grid_size} but basis grid has {basis.grid_size} points")
        J = self.num_modes if self.noise_modes is None else int(self.noise_modes)
        if not 1 <= J <= self.num_modes:
            raise InvalidArgument(f"noise_modes must lie in [1, {self.num_modes}], got {J}")
        mx = 1e6 * model.c0 if self.explosion_threshold is None else float(self.explosion_threshold)
        if not mx > 9.0 * model.c0:
            raise InvalidArgument(f"explosion_threshold must exceed 9 c0 = {9 * model.c0}")
        if not (self.dt > 0 and self.horizon > 0 and self.dt <= self.horizon):
            raise InvalidArgument("need 0 < dt <= horizon")
        if int(self.record_every) < 1:
            raise InvalidArgument("record_every must be >= 1")
        return replace(self, grid_size=basis.grid_size, noise_modes=J, explosion_threshold=mx)

    def to_dict(self):
        return asdict(self)


@dataclass
class FieldState:
    time: float
    coeffs: np.ndarray
    grid_values: np.ndarray
    sup_norm: float
    nonfinite: bool = False


def initial_state(basis, u0):
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (basis.grid_size,):
        raise InvalidArgument(f"u0 must have {basis.grid_size} grid values")
    if not np.all(np.isfinite(u0)):
        raise InvalidArgument("u0 must be finite")
    return FieldState(0.0, forward_transform(basis, u0), u0.copy(), float(np.max(np.abs(u0))))


def sine_initial(basis, amplitude, mode=1):
    """``amplitude * sin(mode pi x / L)`` on the grid."""
    return amplitude * np.sin(mode * math.pi * basis.grid_points / basis.domain_length)


# ---------------------------------------------------------------------------
# ladder of tripling / thirding times


@dataclass(frozen=True)
class Crossing:
    time: float
    direction: str
    level: float
    index: int


@dataclass(frozen=True)
class LadderState:
    """Stopping-time ladder on the levels ``3^n c0``, ``n >= 1``.

    Before the first level is hit ``level_index`` is 0. From an anchor
    ``3^n c0`` with ``n >= 2`` the next record is the first time the sup-norm
    reaches ``3^(n+1) c0`` or falls to ``3^(n-1) c0``; from the floor ``3 c0``
    only the rise to ``9 c0`` counts.
    """

    c0: float
    level_index: int = 0
    last_value: float = math.nan
    last_time: float = -math.inf
    crossings: tuple = ()

    @property
    def started(self):
        return self.level_index >= 1

    @property
    def level(self):
        return self.c0 * 3.0 ** self.level_index if self.started else math.nan


def _crossing(c0, t, direction, k):
    return Crossing(float(t), "up" if direction > 0 else "down", c0 * 3.0 ** k, int(k))


def ladder_update(ladder, sup_norm, t):
    """Feed one sup-norm sample taken at time ``t``."""
    if t < ladder.last_time:
        raise ContractViolation(f"time went backwards: {t} < {ladder.last_time}")
    if not sup_norm >= 0:
        raise InvalidArgument(f"sup_norm must be >= 0, got {sup_norm}")
    started, n, prev, new = kernels.ladder_scan(
        np.array([sup_norm], dtype=float), np.array([t], dtype=float),
        ladder.c0, ladder.started, max(ladder.level_index, 0), ladder.last_value)
    return LadderState(
        ladder.c0, n if started else 0, prev, float(t),
        ladder.crossings + tuple(_crossing(ladder.c0, *c) for c in new))


# ---------------------------------------------------------------------------
# stepping


def noise_increment(spectrum, basis, J, dt, rng):
    """``sum_{j<=J} lambda_j sqrt(dt) xi_j e_j`` on the grid."""
    if not 1 <= J <= basis.num_modes:
        raise InvalidArgument(f"J must lie in [1, {basis.num_modes}]")
    xi = rng.standard_normal(J)
    return inverse_transform(basis, spectrum.values(J) * math.sqrt(dt) * xi)


class _Stepper:
    """Vectorised stepper over a batch of grid states ``(B, M)``."""

    def __init__(self, model, spectrum, basis, config):
        self.model, self.basis, self.cfg = model, basis, config
        self.decay = np.exp(-basis.eigenvalues * config.dt)
        self.noise_scale = spectrum.values(config.noise_modes) * math.sqrt(config.dt)
        self.noisy = bool(np.any(self.noise_scale != 0))
        self.drift_kind = (kernels.DRIFT_POWER if model.drift == "power_dissipative"
                           else kernels.DRIFT_ZERO)
        self.diff_kind = (kernels.DIFF_POLYNOMIAL if model.diffusion == "polynomial"
                          else kernels.DIFF_ADDITIVE)

    def step(self, u, xi):
        """Advance ``u`` (B, M) by one step with normals ``xi`` (B, J).

        Returns ``(u_next, coeffs_next)``.
        """
        m, b, cfg = self.model, self.basis, self.cfg
        if self.noisy:
            dw = inverse_transform(b, xi * self.noise_scale)
        else:
            dw = np.zeros_like(u)
        g = np.empty_like(u)
        if cfg.scheme == "semi_implicit_split":
            w = np.array(u, copy=True)
            if self.drift_kind == kernels.DRIFT_POWER:
                kernels.drift_flow(w, m.beta, m.k1, cfg.dt)
            c = forward_transform(b, w) * self.decay
            if self.noisy:
                v = inverse_transform(b, c)
                kernels.noise_term(v, dw, g, m.gamma, m.k2, self.diff_kind)
                c += forward_transform(b, g)
        else:
            u = np.ascontiguousarray(u)
            kernels.tamed_bracket(u, dw, g, m.beta, m.k1, m.gamma, m.k2, cfg.dt,
                                  self.drift_kind, self.diff_kind)
            c = forward_transform(b, g) * self.decay
        return inverse_transform(b, c), c


def spde_step(state, model, spectrum, basis, config, rng):
    """Advance ``state`` by ``config.dt``; ``rng`` supplies ``J`` normals."""
    cfg = config.resolve(basis, model)
    xi = rng.standard_normal((1, cfg.noise_modes))
    with np.errstate(over="ignore", invalid="ignore"):
        u, c = _Stepper(model, spectrum, basis, cfg).step(state.grid_values[None, :], xi)
    u, c = u[0], c[0]
    finite = bool(np.all(np.isfinite(u)))
    sup = float(np.max(np.abs(u))) if finite else math.inf
    return FieldState(state.time + cfg.dt, c, u, sup, not finite)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TrajectoryRecord:
    seed: int
    config_digest: str
    times: np.ndarray
    sup_norms: np.ndarray
    level_indices: np.ndarray
    crossings: tuple
    verdict: str
    verdict_time: float
    final_grid: np.ndarray
    wall_time: float = field(default=0.0, compare=False)

    @property
    def exploded(self):
        return self.verdict != "survived_to_T"

    @property
    def digest(self):
        """64-bit hash of everything except wall-clock time."""
        h = hashlib.blake2b(digest_size=8)
        h.update(f"{self.seed}|{self.config_digest}|{self.verdict}|{self.verdict_time!r}".encode())
        for a in (self.times, self.sup_norms, self.level_indices, self.final_grid):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(repr([(c.time, c.direction, c.index) for c in self.crossings]).encode())
        return h.hexdigest()

    def series_rows(self):
        return list(zip(self.times.tolist(), self.sup_norms.tolist(),
                        self.level_indices.tolist()))


def config_digest(model, spectrum, basis, config, u0):
    payload = {
        "model": model.to_dict(),
        "spectrum": spectrum.to_dict(),
        "basis": {"length": basis.domain_length, "modes": basis.num_modes,
                  "grid": basis.grid_size},
        "solver": config.to_dict(),
        "u0": hashlib.blake2b(np.ascontiguousarray(u0, dtype=float).tobytes(),
                              digest_size=8).hexdigest(),
    }
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


def simulate_batch(u0, model, spectrum, basis, config, seeds, noise=None):
    """Simulate one trajectory per seed; returns a list of records.

    Row ``b`` draws its normals from ``default_rng(seeds[b])`` unless ``noise``
    (an object with ``block(n, rows)`` like :class:`GaussianStreams`) is given.
    """
    cfg = config.resolve(basis, model)
    state0 = initial_state(basis, u0)
    digest = config_digest(model, spectrum, basis, cfg, state0.grid_values)
    stepper = _Stepper(model, spectrum, basis, cfg)
    seeds = [int(s) for s in seeds]
    B = len(seeds)
    streams = noise if noise is not None else GaussianStreams(seeds, cfg.noise_modes)
    n_total, dt, mx = cfg.num_steps, cfg.dt, cfg.explosion_threshold
    c0 = model.c0
    t_start = time.perf_counter()

    ladders = [[False, 0, math.nan, []] for _ in range(B)]
    sups = [[state0.sup_norm] for _ in range(B)]
    stop_step = np.full(B, n_total, dtype=np.int64)
    verdicts = ["survived_to_T"] * B
    final = np.empty((B, basis.grid_size))
    if cfg.ladder_enabled:
        for lad in ladders:
            lad[0], lad[1], lad[2], cr = kernels.ladder_scan(
                np.array([state0.sup_norm]), np.array([0.0]), c0, False, 0, math.nan)
            lad[3].extend(cr)

    alive = np.arange(B)
    u = np.tile(state0.grid_values, (B, 1))
    done = 0
    while done < n_total and alive.size:
        n = min(_CHUNK, n_total - done)
        xi = streams.block(n, rows=alive.tolist())
        sup_buf = np.empty((alive.size, n))
        running = np.ones(alive.size, dtype=bool)
        last = np.full(alive.size, n, dtype=np.int64)
        for i in range(n):
            with np.errstate(over="ignore", invalid="ignore"):
                u, _ = stepper.step(u, xi[:, i])
                s = np.max(np.abs(u), axis=1)
            sup_buf[:, i] = s
            hit = running & ~(s < mx)
            if hit.any():
                for r in np.flatnonzero(hit):
                    b = alive[r]
                    last[r] = i + 1
                    stop_step[b] = done + i + 1
                    verdicts[b] = "exploded_at_t" if np.isfinite(s[r]) else "nonfinite_at_t"
                    final[b] = u[r]
                running &= ~hit
                u[hit] = 0.0
        times = (done + 1 + np.arange(n)) * dt
        for r, b in enumerate(alive):
            k = int(last[r])
            seg = sup_buf[r, :k]
            sups[b].extend(seg.tolist())
            if cfg.ladder_enabled:
                lad = ladders[b]
                lad[0], lad[1], lad[2], cr = kernels.ladder_scan(
                    seg, times[:k], c0, lad[0], lad[1], lad[2])
                lad[3].extend(cr)
        done += n
        if not running.all():
            alive, u = alive[running], u[running]
    final[alive] = u

    wall = (time.perf_counter() - t_start) / max(B, 1)
    records = []
    for b in range(B):
        k = int(stop_step[b])
        s_all = np.asarray(sups[b])
        idx = np.arange(0, k + 1, cfg.record_every)
        if idx[-1] != k:
            idx = np.append(idx, k)
        t_rec = idx * dt
        crossings = tuple(_crossing(c0, *c) for c in ladders[b][3])
        if crossings:
            ct = np.array([c.time for c in crossings])
            ci = np.array([c.index for c in crossings])
            pos = np.searchsorted(ct, t_rec, side="right")
            levels = np.where(pos > 0, ci[np.maximum(pos - 1, 0)], 0)
        else:
            levels = np.zeros(idx.size, dtype=np.int64)
        records.append(TrajectoryRecord(
            seed=seeds[b], config_digest=digest, times=t_rec, sup_norms=s_all[idx],
            level_indices=levels.astype(np.int64), crossings=crossings,
            verdict=verdicts[b], verdict_time=float(k * dt), final_grid=final[b].copy(),
            wall_time=wall))
    return records


def simulate_spde(u0, model, spectrum, basis, config, seed, noise=None):
    """Simulate one trajectory until ``T``, explosion or a non-finite state."""
    return simulate_batch(u0, model, spectrum, basis, config, [seed], noise=noise)[0]
