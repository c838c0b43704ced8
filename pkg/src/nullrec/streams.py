"""Counter-based random streams and ordered parallel execution.

Every simulated path owns a Philox stream keyed by ``(seed, path index,
substream)``.  Normals come from the inverse normal CDF applied to 53-bit
uniforms, so the ``j``-th normal of a path depends only on its key and on
``j``.  Results are therefore independent of how paths are grouped into
blocks or distributed over worker processes.
"""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.special import ndtri

MASK64 = (1 << 64) - 1
N_SUBSTREAMS = 16

# substream tags
PRELIMIT = 0
LIMIT_CLOCK = 1
LIMIT_NOISE = 2
DIRECT_EM = 3
EXCURSION = 4

WORKERS_ENV = "NULLREC_WORKERS"


def derive_seed(seed, *tags):
    """Derive a 64-bit child seed from a master seed and integer tags."""
    ss = np.random.SeedSequence(entropy=int(seed) & MASK64,
                                spawn_key=tuple(int(t) for t in tags))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def path_generator(seed, path_index, substream=PRELIMIT):
    """Philox generator owned by one path."""
    if not 0 <= substream < N_SUBSTREAMS:
        raise ValueError(f"substream must lie in [0, {N_SUBSTREAMS})")
    key = np.array([int(seed) & MASK64,
                    int(path_index) * N_SUBSTREAMS + substream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def inverse_cdf_normals(gen, size):
    """Standard normals from raw 64-bit draws, one draw per normal."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    raw = gen.bit_generator.random_raw(int(np.prod(shape)))
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u).reshape(shape)


def path_normals(seed, path_indices, n, width, substream, path_major=False):
    """Normals drawn path by path.

    Shape ``(n, n_paths, width)``, or ``(n_paths, n, width)`` when
    ``path_major`` is set.
    """
    out = np.empty((len(path_indices), n, width))
    for j, i in enumerate(path_indices):
        out[j] = inverse_cdf_normals(path_generator(seed, i, substream), (n, width))
    return out if path_major else out.transpose(1, 0, 2).copy()


class PathNoise:
    """Chunked normals for a batch of paths that advance in lockstep.

    Every call to :meth:`next` consumes one vector of ``width`` normals per
    path.  When an ``active`` mask is given only active paths are refilled at
    chunk boundaries; inactive paths never consume again, which is the usage
    pattern of stopped excursions.
    """

    def __init__(self, seed, path_indices, width, substream=PRELIMIT, chunk=512):
        self.path_indices = np.asarray(path_indices, dtype=np.int64)
        self.width = int(width)
        self.chunk = int(chunk)
        self._gens = [path_generator(seed, i, substream) for i in self.path_indices]
        self._buf = np.zeros((self.chunk, len(self._gens), self.width))
        self._pos = self.chunk

    def __len__(self):
        return len(self._gens)

    def _refill(self, active):
        idx = range(len(self._gens)) if active is None else np.flatnonzero(active)
        for j in idx:
            self._buf[:, j, :] = inverse_cdf_normals(self._gens[j], (self.chunk, self.width))
        self._pos = 0

    def next(self, active=None):
        if self._pos == self.chunk:
            self._refill(active)
        # copy: the buffer is overwritten at the next refill
        z = self._buf[self._pos].copy()
        self._pos += 1
        return z


def default_workers():
    """Worker count from the environment, defaulting to one."""
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def path_blocks(n_paths, block_size):
    """Fixed partition of ``range(n_paths)`` into contiguous index arrays."""
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    block_size = max(1, int(block_size))
    return [np.arange(s, min(s + block_size, n_paths))
            for s in range(0, n_paths, block_size)]


def _call(args):
    fn, a = args
    return fn(*a)


def ordered_map(fn, arg_tuples, workers=None):
    """Apply ``fn`` to each argument tuple, returning results in input order."""
    workers = default_workers() if workers is None else max(1, int(workers))
    arg_tuples = list(arg_tuples)
    if workers == 1 or len(arg_tuples) <= 1:
        return [fn(*a) for a in arg_tuples]
    with ProcessPoolExecutor(max_workers=min(workers, len(arg_tuples))) as ex:
        return list(ex.map(_call, [(fn, a) for a in arg_tuples]))
