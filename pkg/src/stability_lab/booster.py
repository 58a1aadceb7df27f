"""Boosting weak output stability into list replicability.

Given a learner that outputs some fixed hypothesis with probability rho on
every realizable distribution, the boosted rule runs it on T consecutive
batches, keeps the hypotheses that appear often enough, screens them on a
holdout suffix, and returns the most frequent survivor.  With probability
at least 1 - delta the result lands in a data-independent list of at most
floor(1/rho) accurate hypotheses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .concepts import Hypothesis
from .distributions import FiniteDistribution, Sample
from .errors import DomainMismatchError
from .kernels import derive_grid, get_ops
from .learners import BatchProgram, EvalOutcome, Learner

_FALLBACK_IDX = np.iinfo(np.int64).min


@dataclass(frozen=True)
class BoostParams:
    """Derived constants of the boosting construction.

    T and n2 instantiate the concentration steps with explicit two-sided
    Hoeffding constants: T batches resolve output frequencies to alpha/2,
    n2 holdout examples resolve the losses of the at most L+1 candidates
    to eps/2, each at confidence delta/2.
    """

    rho: float
    eps: float
    delta: float
    n0: int
    L: int
    alpha: float
    T: int
    n1: int
    n2: int

    def __post_init__(self):
        assert self.L >= 1 and self.alpha > 0
        assert 1.0 / (self.L + 1) < self.rho <= 1.0 / self.L + 1e-12
        assert self.T >= 1 and self.n2 >= 1

    def hits_required(self) -> int:
        """Batches a hypothesis must win to become a candidate.

        The tiny slack keeps float dust from bumping the ceiling of an
        exactly-integer threshold.
        """
        return math.ceil((self.rho - self.alpha / 2.0) * self.T - 1e-9)

    def holdout_bound(self) -> float:
        """Empirical-loss ceiling 3 eps / 2 applied on the holdout."""
        return 1.5 * self.eps


def boost_params(rho: float, eps: float, delta: float, n0: int) -> BoostParams:
    if not 0 < rho <= 1:
        raise ValueError("booster: rho must lie in (0, 1]")
    if not 0 < eps < 1 or not 0 < delta < 1:
        raise ValueError("booster: eps and delta must lie in (0, 1)")
    if n0 < 1:
        raise ValueError("booster: inner sample size n0 must be >= 1")
    L = math.floor(1.0 / rho)
    alpha = rho - 1.0 / (L + 1)
    T = math.ceil(8.0 * math.log(4.0 / delta) / (alpha * alpha))
    n2 = math.ceil(2.0 * math.log(4.0 * (L + 1) / delta) / (eps * eps))
    return BoostParams(rho=rho, eps=eps, delta=delta, n0=n0, L=L, alpha=alpha,
                       T=T, n1=T * n0, n2=n2)


class _BoostProgram(BatchProgram):
    """Vectorized boosted evaluation from raw draw matrices."""

    wants = "draws"

    def __init__(self, dist, inner_prog, params: BoostParams, fallback: Hypothesis):
        self.dist = dist
        self.inner = inner_prog
        self.p = params
        self.fallback = fallback
        self.n_atoms = dist.support_size
        self._mism_cache: dict[int, np.ndarray] = {}
        self.last_extras: dict = {}

    def accepts(self, n: int) -> bool:
        return n == self.p.n1 + self.p.n2 and self.inner.accepts(self.p.n0)

    def _mism_vector(self, idx: int) -> np.ndarray:
        v = self._mism_cache.get(idx)
        if v is None:
            h = self.hypothesis_for(idx)
            v = np.array([1 if h(ex.x) != ex.y else 0 for ex in self.dist.atoms],
                         dtype=np.int64)
            self._mism_cache[idx] = v
        return v

    def select(self, draws, keys, n, trial_start):
        p = self.p
        ops = get_ops()
        m = draws.shape[0]
        prefix = np.ascontiguousarray(
            draws[:, :p.n1]).reshape(m * p.T, p.n0)
        batch_counts = ops.count_block(prefix, self.n_atoms)
        batch_keys = derive_grid(
            np.asarray(keys, dtype=np.uint64),
            np.arange(p.T, dtype=np.uint64), rng.ROLE_BATCH)
        inner_idx, _, _ = self.inner.select(
            batch_counts, batch_keys.ravel(), p.n0, trial_start)
        inner_idx = inner_idx.reshape(m, p.T)
        # inner tables may alias one hypothesis under several indices;
        # canonicalize so frequency counting matches the sequential path
        glob = np.unique(inner_idx)
        canon: dict[tuple, int] = {}
        remap = np.empty(glob.size, dtype=np.int64)
        dirty = False
        for pos, u in enumerate(glob.tolist()):
            labels = self.hypothesis_for(u).labels
            keep = canon.setdefault(labels, u)
            remap[pos] = keep
            dirty = dirty or keep != u
        if dirty:
            inner_idx = remap[np.searchsorted(glob, inner_idx)]
        q_counts = ops.count_block(
            np.ascontiguousarray(draws[:, p.n1:p.n1 + p.n2]), self.n_atoms)
        full_counts = ops.count_block(draws, self.n_atoms)
        hits = p.hits_required()
        bound = p.holdout_bound()
        out = np.empty(m, dtype=np.int64)
        fallback = np.zeros(m, dtype=bool)
        mistakes = np.empty(m, dtype=np.int64)
        holdout = np.empty(m, dtype=np.int64)
        for i in range(m):
            uniq, cnt = np.unique(inner_idx[i], return_counts=True)
            best = None  # (count, labels, idx, q_mist)
            for u, c in zip(uniq.tolist(), cnt.tolist()):
                if c < hits:
                    continue
                q_mist = int(q_counts[i] @ self._mism_vector(u))
                if q_mist / p.n2 > bound:
                    continue
                key = (-c, self.hypothesis_for(u).labels)
                if best is None or key < best[0]:
                    best = (key, u, q_mist)
            if best is None:
                out[i] = _FALLBACK_IDX
                fallback[i] = True
                holdout[i] = int(q_counts[i] @ self._mism_vector(_FALLBACK_IDX))
                mistakes[i] = int(full_counts[i] @ self._mism_vector(_FALLBACK_IDX))
            else:
                out[i] = best[1]
                holdout[i] = best[2]
                mistakes[i] = int(full_counts[i] @ self._mism_vector(best[1]))
        self.last_extras = {"holdout_mistakes": holdout}
        return out, fallback, mistakes

    def hypothesis_for(self, idx):
        if idx == _FALLBACK_IDX:
            return self.fallback
        return self.inner.hypothesis_for(idx)


def boost(a: Learner, params: BoostParams, fallback: Hypothesis) -> Learner:
    """The list learner built on top of ``a``.

    Consumes samples of length n1 + n2: the prefix splits into T
    consecutive batches of n0 fed to ``a`` with child seeds, the suffix is
    the holdout.  Outputs the most frequent batch winner that appeared at
    least ceil((rho - alpha/2) T) times and has holdout loss at most
    3 eps / 2; emits the flagged fallback when no hypothesis qualifies.
    """
    if fallback.domain != a.domain:
        raise DomainMismatchError("booster: fallback domain mismatch")
    p = params

    def run(sample: Sample, seed: int) -> EvalOutcome:
        if sample.n < p.n1 + p.n2:
            raise ValueError(
                f"booster: sample of length {sample.n} is shorter than "
                f"n1+n2 = {p.n1 + p.n2}")
        counts: dict[tuple, int] = {}
        reps: dict[tuple, Hypothesis] = {}
        for b in range(p.T):
            batch = sample.slice(b * p.n0, (b + 1) * p.n0)
            h = a.evaluate(batch, rng.derive(seed, b, rng.ROLE_BATCH))
            counts[h.labels] = counts.get(h.labels, 0) + 1
            reps.setdefault(h.labels, h)
        holdout = sample.slice(p.n1, p.n1 + p.n2)
        hits = p.hits_required()
        bound = p.holdout_bound()
        best = None
        for labels, c in counts.items():
            if c < hits:
                continue
            h = reps[labels]
            mist = sum(1 for ex in holdout if h(ex.x) != ex.y)
            if mist / p.n2 > bound:
                continue
            key = (-c, labels)
            if best is None or key < best[0]:
                best = (key, h)
        if best is None:
            return EvalOutcome(fallback, fallback=True)
        return EvalOutcome(best[1])

    inner_prog = a.batch_program

    def program(dist: FiniteDistribution):
        if inner_prog is None:
            raise ValueError("booster: fast path needs an inner fast path")
        return _BoostProgram(dist, inner_prog(dist), p, fallback)

    return Learner(
        name=f"boost({a.name},rho={p.rho},eps={p.eps},delta={p.delta},n0={p.n0})",
        domain=a.domain, evaluate_flagged=run, proper=False,
        concept_class=a.concept_class,
        sample_size=lambda eps, delta: p.n1 + p.n2,
        deterministic=a.deterministic,
        batch_program=program if inner_prog is not None else None)
