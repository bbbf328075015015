"""Monte Carlo explosion probabilities and (beta, gamma) frontier sweeps.

Trial ``i`` of every cell uses the seed ``derive_seed(master_seed, i)``, so
cells share their noise (common random numbers) and results never depend on
how trials are spread over workers. Trials are grouped into fixed batches by
index; a batch is the unit of parallel work.
"""

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.stats

from .errors import ConfigError, InvalidArgument, SweepIOError
from .model import ModelSpec
from .rng import trial_seeds
from .spde import SolverConfig, simulate_batch, sine_initial
from .spectral import NoiseSpectrum, compute_eta, dirichlet_interval_basis, white_noise

RESULTS_HEADER = ("beta", "gamma", "trials", "explosions", "wilson_lo", "wilson_hi",
                  "mean_blowup_time", "below_ito", "below_theorem", "below_combined")
BATCH_SIZE = 50


# ---------------------------------------------------------------------------
# classification


def ito_threshold(beta):
    return (beta + 1.0) / 2.0


def theorem_threshold(beta, eta):
    return 1.0 + (1.0 - eta) * (beta - 1.0) / 2.0


def combined_threshold(beta):
    return max(1.5, (3.0 + beta) / 4.0)


@dataclass(frozen=True)
class CellClass:
    below_ito: bool
    below_theorem: bool
    below_combined: bool
    boundary: tuple = ()


def classify_cell(beta, gamma, eta):
    """Strict comparisons of ``gamma`` with the three threshold lines.

    ``boundary`` names the lines ``gamma`` sits on (to 1e-12 relative); such
    cells compare false.
    """
    if not beta > 1:
        raise InvalidArgument(f"beta must be > 1, got {beta}")
    lines = {"ito": ito_threshold(beta), "theorem": theorem_threshold(beta, eta),
             "combined": combined_threshold(beta)}
    on = tuple(k for k, v in lines.items() if math.isclose(gamma, v, rel_tol=1e-12))
    return CellClass(gamma < lines["ito"], gamma < lines["theorem"],
                     gamma < lines["combined"], on)


def wilson_interval(successes, trials, confidence=0.95):
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    ci = scipy.stats.binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


# ---------------------------------------------------------------------------
# explosion probability


@dataclass(frozen=True)
class ExplosionEstimate:
    explosions: int
    trials: int
    wilson_lo: float
    wilson_hi: float
    mean_blowup_time: float

    @property
    def interval(self):
        return (self.wilson_lo, self.wilson_hi)


def _run_trial_batch(args):
    u0, model, spectrum, basis, config, seeds = args
    recs = simulate_batch(u0, model, spectrum, basis, config, seeds)
    return [(r.exploded, r.verdict_time) for r in recs]


def _batches(trials, batch_size):
    return [range(s, min(trials, s + batch_size)) for s in range(0, trials, batch_size)]


def _map(fn, jobs, workers, pool=None):
    if pool is not None:
        return list(pool.map(fn, jobs))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def estimate_explosion_probability(model, spectrum, basis, config, u0, trials, master_seed,
                                   workers=1, batch_size=BATCH_SIZE, _pool=None):
    """Count explosions over ``trials`` independent trajectories.

    Returns an :class:`ExplosionEstimate` with a 95% Wilson interval and the
    mean verdict time among exploded trials (NaN if none).
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    jobs = [(u0, model, spectrum, basis, config, trial_seeds(master_seed, b))
            for b in _batches(trials, batch_size)]
    out = [row for part in _map(_run_trial_batch, jobs, workers, _pool) for row in part]
    times = [t for exploded, t in out if exploded]
    k = len(times)
    lo, hi = wilson_interval(k, trials)
    return ExplosionEstimate(k, trials, lo, hi, float(np.mean(times)) if k else math.nan)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    """A rectangular (beta, gamma) sweep.

    ``model`` supplies everything except beta and gamma; the initial datum is
    ``u0_amplitude * sin(pi x / L)``.
    """

    betas: tuple
    gammas: tuple
    trials: int = 200
    model: ModelSpec = ModelSpec()
    solver: SolverConfig = SolverConfig()
    spectrum: NoiseSpectrum = field(default_factory=white_noise)
    domain_length: float = math.pi
    u0_amplitude: float = 5.0
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        b = tuple(float(v) for v in self.betas)
        g = tuple(float(v) for v in self.gammas)
        if not b or not g:
            raise InvalidArgument("beta and gamma values must be nonempty")
        if list(b) != sorted(b) or list(g) != sorted(g):
            raise InvalidArgument("beta and gamma values must be sorted")
        if int(self.trials) < 1:
            raise InvalidArgument("trials must be >= 1")
        object.__setattr__(self, "betas", b)
        object.__setattr__(self, "gammas", g)

    @property
    def cells(self):
        return [(b, g) for b in self.betas for g in self.gammas]

    def digest(self):
        payload = {
            "betas": self.betas, "gammas": self.gammas, "trials": self.trials,
            "model": self.model.to_dict(), "solver": self.solver.to_dict(),
            "spectrum": self.spectrum.to_dict(), "domain_length": self.domain_length,
            "u0_amplitude": self.u0_amplitude, "master_seed": self.master_seed,
        }
        text = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


@dataclass(frozen=True)
class CellResult:
    beta: float
    gamma: float
    trials: int
    explosions: int
    wilson_lo: float
    wilson_hi: float
    mean_blowup_time: float
    below_ito: bool
    below_theorem: bool
    below_combined: bool

    def row(self):
        def b(v):
            return "true" if v else "false"
        return [repr(self.beta), repr(self.gamma), str(self.trials), str(self.explosions),
                repr(self.wilson_lo), repr(self.wilson_hi), repr(self.mean_blowup_time),
                b(self.below_ito), b(self.below_theorem), b(self.below_combined)]

    @classmethod
    def from_row(cls, row):
        def b(v):
            if v not in ("true", "false"):
                raise InvalidArgument(f"expected true/false, got {v!r}")
            return v == "true"
        return cls(float(row[0]), float(row[1]), int(row[2]), int(row[3]), float(row[4]),
                   float(row[5]), float(row[6]), b(row[7]), b(row[8]), b(row[9]))


@dataclass
class ExplosionMap:
    eta: float
    cells: list

    def cell(self, beta, gamma):
        for c in self.cells:
            if c.beta == beta and c.gamma == gamma:
                return c
        raise KeyError((beta, gamma))

    def boundary_cells(self):
        return [(c.beta, c.gamma, classify_cell(c.beta, c.gamma, self.eta).boundary)
                for c in self.cells if classify_cell(c.beta, c.gamma, self.eta).boundary]

    def threshold_lines(self):
        """Threshold gamma values per beta row, for plotting."""
        betas = sorted({c.beta for c in self.cells})
        return [{"beta": b, "ito": ito_threshold(b), "theorem": theorem_threshold(b, self.eta),
                 "combined": combined_threshold(b)} for b in betas]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for c in self.cells:
            w.writerow(c.row())
        return buf.getvalue()

    def digest(self):
        return hashlib.blake2b(self.to_csv().encode(), digest_size=8).hexdigest()


def _cell_result(beta, gamma, eta, est):
    cls = classify_cell(beta, gamma, eta)
    return CellResult(beta, gamma, est.trials, est.explosions, est.wilson_lo, est.wilson_hi,
                      est.mean_blowup_time, cls.below_ito, cls.below_theorem,
                      cls.below_combined)


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != RESULTS_HEADER:
        raise InvalidArgument(f"{path} does not start with the results header")
    return rows[1:]


def load_results(path, eta=math.nan):
    """Re-read a ``results.csv``; exact inverse of :func:`persist_results`."""
    return ExplosionMap(eta, [CellResult.from_row(r) for r in _read_rows(path)])


def _append_row(path, row, header):
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(RESULTS_HEADER)
        w.writerow(row)
        fh.flush()
        os.fsync(fh.fileno())


def run_sweep(spec, out_dir=None, max_cells=None):
    """Fill every (beta, gamma) cell of ``spec``.

    With ``out_dir`` each finished cell is appended to ``results.csv`` at
    once, and cells already present from an earlier run of the same spec are
    reused, so an interrupted sweep resumes where it stopped. ``max_cells``
    bounds how many new cells are computed in this call.
    """
    eta = compute_eta(spec.spectrum)
    basis = dirichlet_interval_basis(spec.domain_length, spec.solver.num_modes,
                                     spec.solver.grid_size)
    u0 = sine_initial(basis, spec.u0_amplitude)
    done = {}
    results = meta = None
    if out_dir is not None:
        results = os.path.join(out_dir, "results.csv")
        meta = os.path.join(out_dir, "sweep.json")
        try:
            os.makedirs(out_dir, exist_ok=True)
            if os.path.exists(results):
                with open(meta) as fh:
                    old = json.load(fh).get("sweep_digest")
                if old != spec.digest():
                    raise ConfigError(f"{results} belongs to a different sweep", key="out")
                for r in _read_rows(results):
                    c = CellResult.from_row(r)
                    done[(c.beta, c.gamma)] = c
            else:
                with open(meta, "w") as fh:
                    json.dump({"sweep_digest": spec.digest()}, fh)
        except (OSError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise SweepIOError(f"cannot prepare {out_dir}: {exc}", len(done)) from exc

    cells = []
    computed = 0
    pool = ProcessPoolExecutor(max_workers=spec.workers) if spec.workers > 1 else None
    try:
        for i, (beta, gamma) in enumerate(spec.cells):
            if (beta, gamma) in done:
                cells.append(done[(beta, gamma)])
                continue
            if max_cells is not None and computed >= max_cells:
                break
            model = replace(spec.model, beta=beta, gamma=gamma)
            est = estimate_explosion_probability(
                model, spec.spectrum, basis, spec.solver, u0, spec.trials, spec.master_seed,
                workers=spec.workers, _pool=pool)
            cell = _cell_result(beta, gamma, eta, est)
            if results is not None:
                try:
                    _append_row(results, cell.row(), header=not os.path.exists(results))
                except OSError as exc:
                    raise SweepIOError(f"writing {results} failed at cell {i}: {exc}", i) from exc
            cells.append(cell)
            computed += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return ExplosionMap(eta, cells)


def persist_results(obj, path):
    """Write an :class:`ExplosionMap` as ``results.csv``, one trajectory record
    as its ``t,sup_norm,level_index`` series, or a list of SDE trials."""
    try:
        if isinstance(obj, ExplosionMap):
            text = obj.to_csv()
        elif hasattr(obj, "series_rows"):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(("t", "sup_norm", "level_index"))
            for t, s, k in obj.series_rows():
                w.writerow((repr(t), repr(s), k))
            text = buf.getvalue()
        else:
            if not isinstance(obj, (list, tuple)) or not all(hasattr(t, "exit_reason")
                                                             for t in obj):
                raise InvalidArgument(f"cannot persist a {type(obj).__name__}")
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(("trial", "seed", "exit_time", "exit_reason", "final_norm_sq"))
            for tr in obj:
                w.writerow((tr.trial, tr.seed, repr(tr.exit_time), tr.exit_reason,
                            repr(tr.final_norm_sq)))
            text = buf.getvalue()
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise SweepIOError(f"cannot write {path}: {exc}", 0) from exc


def to_json_ready(obj):
    """``asdict`` with non-finite floats mapped to None."""
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v
    return clean(asdict(obj) if hasattr(obj, "__dataclass_fields__") else obj)
