"""Hot numeric kernels with two interchangeable backends.

The Monte Carlo estimators spend essentially all of their time drawing
samples from finite distributions and reducing per-trial atom counts to a
chosen hypothesis index.  Those inner loops live here, twice:

* a ``numba`` backend (:func:`numba.njit` compiled loops), the default when
  numba imports cleanly, and
* a pure ``numpy`` fallback with identical bit-for-bit results.

The active backend is selected by the ``STABILITY_LAB_BACKEND`` environment
variable (``"numba"`` or ``"numpy"``) and can be overridden at runtime with
:func:`set_backend`; ``benchmarks/bench_backends.py`` compares the two.

All kernels are pure functions of their arguments.  Randomness enters only
through the splitmix64 counter scheme of :mod:`stability_lab.rng`: trial
``t`` of a run keyed by ``seed`` uses the child key
``derive(seed, t, role)`` and consumes counters ``0..n-1``.
"""

from __future__ import annotations

import os

import numpy as np

from . import rng

U64 = np.uint64
_GOLDEN = U64(rng.GOLDEN)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_S30 = U64(30)
_S27 = U64(27)
_S31 = U64(31)
_S11 = U64(11)
_INV53 = np.float64(1.0 / 9007199254740992.0)

# numpy fallback processes trials in blocks to bound temporary memory
_BLOCK_DRAWS = 4_000_000


def _mix_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _keys_np(seed: int, trial_start: int, trials: int, role: int):
    """Vectorized rng.derive(seed, t, role) for t in [trial_start, ...)."""
    t = np.arange(trial_start, trial_start + trials, dtype=np.uint64)
    h = _mix_np(t + U64((seed + rng.GOLDEN) & rng.MASK64))
    return _mix_np(h + U64((rng.GOLDEN + role) & rng.MASK64))


def _uniform_block_np(keys, n: int):
    """(len(keys), n) uniforms; row i is stream keys[i], counters 0..n-1."""
    ctr = np.arange(1, n + 1, dtype=np.uint64) * _GOLDEN
    v = _mix_np(keys[:, None] + ctr[None, :])
    return (v >> _S11).astype(np.float64) * _INV53


def derive_grid(parents, indices, role: int):
    """Vectorized ``rng.derive(parent, index, role)`` over a parent/index grid.

    Returns a (len(parents), len(indices)) uint64 array.  Backend-independent
    (plain numpy); used for per-batch child keys inside the booster.
    """
    parents = np.asarray(parents, dtype=np.uint64)
    indices = np.asarray(indices, dtype=np.uint64)
    h = _mix_np(parents[:, None] + (indices + _GOLDEN)[None, :])
    return _mix_np(h + U64((rng.GOLDEN + role) & rng.MASK64))


class _NumpyOps:
    """Pure numpy reference backend."""

    name = "numpy"

    @staticmethod
    def derive_keys(seed, trial_start, trials, role):
        return _keys_np(seed, trial_start, trials, role)

    @staticmethod
    def first_uniforms(keys):
        v = _mix_np(keys + _GOLDEN)
        return (v >> _S11).astype(np.float64) * _INV53

    @staticmethod
    def atom_draws(seed, role, trial_start, trials, n, cum):
        keys = _keys_np(seed, trial_start, trials, role)
        out = np.empty((trials, n), dtype=np.int32)
        step = max(1, _BLOCK_DRAWS // max(n, 1))
        for lo in range(0, trials, step):
            hi = min(lo + step, trials)
            u = _uniform_block_np(keys[lo:hi], n)
            out[lo:hi] = np.searchsorted(cum, u.ravel(), side="right").reshape(
                hi - lo, n)
        return out

    @staticmethod
    def atom_counts(seed, role, trial_start, trials, n, cum):
        a = cum.size
        keys = _keys_np(seed, trial_start, trials, role)
        out = np.empty((trials, a), dtype=np.int64)
        step = max(1, _BLOCK_DRAWS // max(n, 1))
        rows = np.repeat(np.arange(step, dtype=np.int64) * a, n)
        for lo in range(0, trials, step):
            hi = min(lo + step, trials)
            u = _uniform_block_np(keys[lo:hi], n)
            idx = np.searchsorted(cum, u.ravel(), side="right")
            m = hi - lo
            flat = np.bincount(rows[: m * n] + idx, minlength=m * a)
            out[lo:hi] = flat.reshape(m, a)
        return out

    @staticmethod
    def count_block(draws, n_atoms):
        """Per-row atom counts of an int32 draw matrix."""
        t, n = draws.shape
        rows = np.repeat(np.arange(t, dtype=np.int64) * n_atoms, n)
        flat = np.bincount(rows + draws.ravel(), minlength=t * n_atoms)
        return flat.reshape(t, n_atoms)

    @staticmethod
    def select_erm(counts, mism):
        mm = counts.astype(np.float64) @ mism.astype(np.float64)
        idx = np.argmin(mm, axis=1)
        mist = np.take_along_axis(mm, idx[:, None], axis=1)[:, 0]
        return idx.astype(np.int64), mist.astype(np.int64)

    @staticmethod
    def select_threshold(counts, mism, n, sigmas):
        mm = counts.astype(np.float64) @ mism.astype(np.float64)
        qual = (mm / float(n)) < sigmas[None, :]
        any_row = qual.any(axis=1)
        idx = np.where(any_row, np.argmax(qual, axis=1), mism.shape[1] - 1)
        mist = np.take_along_axis(mm, idx[:, None], axis=1)[:, 0]
        fallback = ~any_row
        return idx.astype(np.int64), fallback, mist.astype(np.int64)

    @staticmethod
    def select_cube(counts, atom_pos, atom_sign, d, n, kappas):
        a = atom_pos.size
        pos_ind = np.zeros((a, d), dtype=np.int64)
        neg_ind = np.zeros((a, d), dtype=np.int64)
        for j in range(a):
            if atom_sign[j] > 0:
                pos_ind[j, atom_pos[j]] = 1
            else:
                neg_ind[j, atom_pos[j]] = 1
        cf = counts.astype(np.float64)
        pos_cnt = cf @ pos_ind.astype(np.float64)
        neg_cnt = cf @ neg_ind.astype(np.float64)
        conflict = ((pos_cnt > 0) & (neg_cnt > 0)).any(axis=1)
        total = pos_cnt + neg_cnt
        include = (total > 0) & ((total / float(n)) >= kappas[:, None])
        out_minus = include & (neg_cnt > 0)
        powers = (1 << np.arange(d - 1, -1, -1, dtype=np.int64))
        rank = ((~out_minus).astype(np.int64) @ powers)
        mist = np.where(out_minus, pos_cnt, neg_cnt).sum(axis=1)
        return rank, conflict, mist.astype(np.int64)


_NUMBA_CACHE: dict | None = None


def _build_numba():
    """Compile the numba backend once; raises ImportError without numba."""
    global _NUMBA_CACHE
    if _NUMBA_CACHE is not None:
        return _NUMBA_CACHE

    from numba import njit

    golden = _GOLDEN
    m1, m2 = _M1, _M2
    s30, s27, s31, s11 = _S30, _S27, _S31, _S11
    inv53 = _INV53
    jit = lambda f: njit(f, cache=True, nogil=True)  # noqa: E731

    @jit
    def mix(x):
        x = (x ^ (x >> s30)) * m1
        x = (x ^ (x >> s27)) * m2
        return x ^ (x >> s31)

    @jit
    def derive_keys(seed, trial_start, trials, role):
        out = np.empty(trials, dtype=np.uint64)
        for i in range(trials):
            h = mix(seed + golden + U64(trial_start + i))
            out[i] = mix(h + golden + U64(role))
        return out

    @jit
    def first_uniforms(keys):
        out = np.empty(keys.size, dtype=np.float64)
        for i in range(keys.size):
            out[i] = np.float64(mix(keys[i] + golden) >> s11) * inv53
        return out

    @jit
    def atom_draws(seed, role, trial_start, trials, n, cum):
        out = np.empty((trials, n), dtype=np.int32)
        for i in range(trials):
            h = mix(seed + golden + U64(trial_start + i))
            key = mix(h + golden + U64(role))
            for c in range(n):
                u = np.float64(mix(key + U64(c + 1) * golden) >> s11) * inv53
                a = 0
                while u >= cum[a]:
                    a += 1
                out[i, c] = a
        return out

    @jit
    def atom_counts(seed, role, trial_start, trials, n, cum):
        out = np.zeros((trials, cum.size), dtype=np.int64)
        for i in range(trials):
            h = mix(seed + golden + U64(trial_start + i))
            key = mix(h + golden + U64(role))
            for c in range(n):
                u = np.float64(mix(key + U64(c + 1) * golden) >> s11) * inv53
                a = 0
                while u >= cum[a]:
                    a += 1
                out[i, a] += 1
        return out

    @jit
    def count_block(draws, n_atoms):
        t, n = draws.shape
        out = np.zeros((t, n_atoms), dtype=np.int64)
        for i in range(t):
            for c in range(n):
                out[i, draws[i, c]] += 1
        return out

    @jit
    def select_erm(counts, mism):
        t, a = counts.shape
        h = mism.shape[1]
        idx = np.empty(t, dtype=np.int64)
        mist = np.empty(t, dtype=np.int64)
        for i in range(t):
            best = -1
            best_m = np.int64(0)
            for k in range(h):
                m = np.int64(0)
                for j in range(a):
                    m += counts[i, j] * mism[j, k]
                if best < 0 or m < best_m:
                    best = k
                    best_m = m
            idx[i] = best
            mist[i] = best_m
        return idx, mist

    @jit
    def select_threshold(counts, mism, n, sigmas):
        t, a = counts.shape
        h = mism.shape[1]
        idx = np.empty(t, dtype=np.int64)
        fallback = np.zeros(t, dtype=np.bool_)
        mist = np.empty(t, dtype=np.int64)
        for i in range(t):
            chosen = h - 1
            found = False
            chosen_m = np.int64(0)
            for k in range(h):
                m = np.int64(0)
                for j in range(a):
                    m += counts[i, j] * mism[j, k]
                if k == h - 1:
                    chosen_m = m
                if np.float64(m) / np.float64(n) < sigmas[k]:
                    chosen = k
                    chosen_m = m
                    found = True
                    break
            idx[i] = chosen
            fallback[i] = not found
            mist[i] = chosen_m
        return idx, fallback, mist

    @jit
    def select_cube(counts, atom_pos, atom_sign, d, n, kappas):
        t, a = counts.shape
        rank = np.empty(t, dtype=np.int64)
        conflict = np.zeros(t, dtype=np.bool_)
        mist = np.zeros(t, dtype=np.int64)
        pos_cnt = np.zeros(d, dtype=np.int64)
        neg_cnt = np.zeros(d, dtype=np.int64)
        for i in range(t):
            for p in range(d):
                pos_cnt[p] = 0
                neg_cnt[p] = 0
            for j in range(a):
                if atom_sign[j] > 0:
                    pos_cnt[atom_pos[j]] += counts[i, j]
                else:
                    neg_cnt[atom_pos[j]] += counts[i, j]
            r = np.int64(0)
            m = np.int64(0)
            for p in range(d):
                if pos_cnt[p] > 0 and neg_cnt[p] > 0:
                    conflict[i] = True
                total = pos_cnt[p] + neg_cnt[p]
                minus = (total > 0
                         and np.float64(total) / np.float64(n) >= kappas[i]
                         and neg_cnt[p] > 0)
                if minus:
                    m += pos_cnt[p]
                else:
                    r += np.int64(1) << np.int64(d - 1 - p)
                    m += neg_cnt[p]
            rank[i] = r
            mist[i] = m
        return rank, conflict, mist

    class _NumbaOps:
        name = "numba"

    ops = _NumbaOps()
    ops.derive_keys = lambda seed, start, trials, role: derive_keys(
        U64(seed & rng.MASK64), start, trials, role)
    ops.first_uniforms = first_uniforms
    ops.atom_draws = lambda seed, role, start, trials, n, cum: atom_draws(
        U64(seed & rng.MASK64), role, start, trials, n, cum)
    ops.atom_counts = lambda seed, role, start, trials, n, cum: atom_counts(
        U64(seed & rng.MASK64), role, start, trials, n, cum)
    ops.count_block = count_block
    ops.select_erm = select_erm
    ops.select_threshold = select_threshold
    ops.select_cube = select_cube
    _NUMBA_CACHE = ops
    return ops


_numpy_ops = _NumpyOps()


def _default_backend() -> str:
    env = os.environ.get("STABILITY_LAB_BACKEND", "").strip().lower()
    if env in ("numba", "numpy"):
        return env
    if env:
        raise ValueError(
            f"kernels: STABILITY_LAB_BACKEND must be 'numba' or 'numpy', got {env!r}")
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        return "numpy"


_active = _default_backend()


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    if name not in ("numba", "numpy"):
        raise ValueError(f"kernels: unknown backend {name!r}")
    global _active
    _active = name


def available_backends() -> tuple[str, ...]:
    try:
        _build_numba()
        return ("numba", "numpy")
    except ImportError:
        return ("numpy",)


def get_ops():
    """The kernel set of the active backend (falls back to numpy)."""
    global _active
    if _active == "numba":
        try:
            return _build_numba()
        except ImportError:
            _active = "numpy"
    return _numpy_ops
