"""Finite-dimensional comparison SDE ``dX = -|X|^(beta-1) X dt + (1+|X|)^gamma dB``.

Exit from the ball of radius ``R`` is detected after each step, so the
reported exit time is the first grid time with ``|X| > R`` (an O(dt) bias).
Non-finite states count as exits at level ``R``.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .rng import GaussianStreams, derive_seed

SCHEMES = ("euler_maruyama", "tamed_euler")
EXIT_REASONS = {kernels.EXIT_NONE: "horizon", kernels.EXIT_RADIUS: "radius",
                kernels.EXIT_NONFINITE: "nonfinite"}
_CHUNK = 1024


@dataclass(frozen=True)
class SdeConfig:
    """Discretisation of the comparison SDE.

    ``drift_coeff`` and ``noise_coeff`` scale the drift and the diffusion
    coefficient; setting either to 0 switches that term off.
    """

    dimension: int = 1
    beta: float = 3.0
    gamma: float = 1.5
    x0: tuple = None
    dt: float = 1e-3
    horizon: float = 1.0
    exit_radius: float = 1e3
    scheme: str = "tamed_euler"
    drift_coeff: float = 1.0
    noise_coeff: float = 1.0

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise InvalidArgument("dimension must be >= 1")
        x0 = (0.0,) * self.dimension if self.x0 is None else tuple(float(v) for v in self.x0)
        if len(x0) != self.dimension:
            raise InvalidArgument(f"x0 has {len(x0)} entries, dimension is {self.dimension}")
        object.__setattr__(self, "x0", x0)
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"scheme must be one of {SCHEMES}")
        if self.beta < 0 or self.gamma < 0:
            raise InvalidArgument("beta and gamma must be >= 0")
        if not (0 < self.dt < self.horizon):
            raise InvalidArgument("need 0 < dt < horizon")
        if not self.exit_radius > math.sqrt(sum(v * v for v in x0)):
            raise InvalidArgument("exit_radius must exceed |x0|")

    @property
    def num_steps(self):
        return int(round(self.horizon / self.dt))

    def to_dict(self):
        return asdict(self)


def ito_condition(beta, gamma):
    """``gamma < (beta + 1) / 2``: the drift dominates the Ito correction."""
    return gamma < (beta + 1.0) / 2.0


def sde_step(state, config, increment):
    """One step of the configured scheme; ``increment`` is ``sqrt(dt) * N(0, I)``.

    Non-finite input propagates to non-finite output.
    """
    x = np.asarray(state, dtype=float)
    dB = np.asarray(increment, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        norm = np.sqrt(np.dot(x, x))
        f = -config.drift_coeff * norm ** (config.beta - 1.0) * x if norm > 0 else np.zeros_like(x)
        if config.scheme == "tamed_euler":
            drift = config.dt * f / (1.0 + config.dt * np.sqrt(np.dot(f, f)))
        else:
            drift = config.dt * f
        g = config.noise_coeff * (1.0 + norm) ** config.gamma
        return x + drift + g * dB


@dataclass
class SdeTrial:
    trial: int
    seed: int
    exit_time: float
    exit_reason: str
    final_norm_sq: float
    path: np.ndarray = None


def _run_batch(config, seeds, record=False):
    B, d = len(seeds), config.dimension
    n_total = config.num_steps
    x = np.tile(np.asarray(config.x0, dtype=float), (B, 1))
    active = np.ones(B, dtype=np.uint8)
    exit_step = np.full(B, n_total, dtype=np.int64)
    reason = np.zeros(B, dtype=np.int8)
    streams = GaussianStreams(seeds, d)
    sq = math.sqrt(config.dt)
    tamed = config.scheme == "tamed_euler"
    paths = np.empty((B, n_total, d)) if record else None
    done = 0
    while done < n_total and active.any():
        n = min(_CHUNK, n_total - done)
        dB = streams.block(n) * sq
        buf = paths[:, done:done + n] if record else np.empty((B, 0, d))
        if record:
            buf = np.ascontiguousarray(buf)
        kernels.sde_advance(x, dB, active, exit_step, reason, done,
                            config.beta, config.gamma, config.drift_coeff,
                            config.noise_coeff, config.dt, config.exit_radius, tamed, buf)
        if record:
            paths[:, done:done + n] = buf
        done += n
    nsq = np.sum(x * x, axis=1)
    r2 = config.exit_radius ** 2
    nsq = np.where(reason == kernels.EXIT_NONFINITE, r2, nsq)
    return x, exit_step, reason, nsq, paths


def simulate_sde_path(config, seed, record=True):
    """Simulate one path up to ``min(tau_R, T)``; deterministic given ``seed``."""
    _, exit_step, reason, nsq, paths = _run_batch(config, [seed], record=record)
    path = None
    if record:
        k = int(exit_step[0])
        path = np.vstack([np.asarray(config.x0)[None, :], paths[0, :k]])
    return SdeTrial(0, int(seed), float(exit_step[0] * config.dt),
                    EXIT_REASONS[int(reason[0])], float(nsq[0]), path)


def run_sde_trials(config, num_trials, seed, batch_size=1000):
    """Independent trials; trial ``i`` uses ``derive_seed(seed, i)``."""
    out = []
    for start in range(0, num_trials, batch_size):
        idx = list(range(start, min(num_trials, start + batch_size)))
        seeds = [derive_seed(seed, i) for i in idx]
        _, exit_step, reason, nsq, _ = _run_batch(config, seeds)
        for j, i in enumerate(idx):
            out.append(SdeTrial(i, seeds[j], float(exit_step[j] * config.dt),
                                EXIT_REASONS[int(reason[j])], float(nsq[j])))
    return out


@dataclass
class MomentEstimate:
    mean: float
    stderr: float
    num_trials: int
    exits: int


def moment_estimate(config, num_trials, seed):
    """Monte Carlo estimate of ``E|X(T ^ tau_R)|^2`` with its standard error."""
    if num_trials < 100:
        raise InvalidArgument("moment_estimate needs at least 100 trials")
    trials = run_sde_trials(config, num_trials, seed)
    v = np.array([t.final_norm_sq for t in trials])
    exits = sum(t.exit_reason != "horizon" for t in trials)
    return MomentEstimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)),
                          num_trials, int(exits))
