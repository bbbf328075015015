"""Seed derivation and replayable Gaussian streams.

Trial ``i`` of a run with master seed ``m`` draws from
``numpy.random.default_rng(derive_seed(m, i))`` where ``derive_seed`` hashes
``(m, i)`` through :class:`numpy.random.SeedSequence` with ``spawn_key=(i,)``.
Results therefore depend only on ``(m, i)``, never on scheduling or on how
trials are grouped into batches.
"""

import numpy as np


def derive_seed(master_seed, index):
    """Return the 64-bit seed for trial ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def trial_seeds(master_seed, indices):
    return [derive_seed(master_seed, i) for i in indices]


class GaussianStreams:
    """One independent standard-normal stream per seed.

    ``block(n)`` returns an array of shape ``(len(seeds), n, width)``; row ``b``
    is the next ``n * width`` draws of stream ``b`` in order, so successive
    blocks concatenate to the same sequence as one large draw.
    """

    def __init__(self, seeds, width):
        self.seeds = list(seeds)
        self.width = int(width)
        self._gens = [np.random.default_rng(s) for s in self.seeds]

    def block(self, n_steps, rows=None):
        idx = range(len(self._gens)) if rows is None else rows
        out = np.empty((len(idx), n_steps, self.width))
        for j, b in enumerate(idx):
            self._gens[b].standard_normal(out=out[j])
        return out


class CoarsenedStreams:
    """Normals for step ``k * dt`` built from a stream at step ``dt``.

    Each coarse normal is the sum of ``factor`` consecutive fine normals over
    ``sqrt(factor)``, so coarse and fine Brownian increments share one path.
    """

    def __init__(self, base, factor):
        self.base, self.factor = base, int(factor)
        self.width = base.width

    def block(self, n_steps, rows=None):
        fine = self.base.block(n_steps * self.factor, rows=rows)
        b = fine.shape[0]
        return fine.reshape(b, n_steps, self.factor, self.width).sum(axis=2) / np.sqrt(self.factor)
