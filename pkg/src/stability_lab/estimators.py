"""Monte Carlo and exact measurement of output stability.

Trial ``i`` of a run keyed by ``seed`` draws its sample with the child key
``derive(seed, i, ROLE_SAMPLE)`` and evaluates the learner with
``derive(seed, i, ROLE_LEARNER)``, so runs are reproducible, mergeable
across disjoint trial ranges, and independent of scheduling.  When the
learner ships a batch program the trials run on the active kernel backend;
the sequential path produces bit-identical results and serves as the
reference.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import rng
from .concepts import Hypothesis
from .distributions import FiniteDistribution, Sample, draw_sample
from .errors import (CapExceededError, RealizabilityViolationError,
                     StabilityLabError)
from .kernels import get_ops
from .learners import Learner

#: default confidence parameter for Hoeffding half-widths
DEFAULT_BETA = 0.01

#: enumeration budget of the exact oracle
ORACLE_BUDGET = 1_000_000


def hoeffding_half_width(trials: int, beta: float = DEFAULT_BETA) -> float:
    """Two-sided Hoeffding half-width sqrt(ln(2/beta) / (2 trials))."""
    return math.sqrt(math.log(2.0 / beta) / (2.0 * trials))


@dataclass(frozen=True)
class Estimate:
    value: float
    ci_half_width: float
    trials: int


@dataclass
class TrialRun:
    """Raw per-trial outcomes of a Monte Carlo run."""

    learner: str
    dist: str
    n: int
    trials: int
    seed: int
    trial_start: int
    indices: np.ndarray            # per-trial table index
    fallback: np.ndarray           # per-trial fallback flag
    mistakes: np.ndarray           # mistakes of the output on its sample
    table: object                  # idx -> Hypothesis materializer
    extras: dict = field(default_factory=dict)

    def hypothesis(self, i: int) -> Hypothesis:
        return self.table(int(self.indices[i]))

    def hypotheses(self) -> list[Hypothesis]:
        cache: dict[int, Hypothesis] = {}
        out = []
        for i in self.indices.tolist():
            h = cache.get(i)
            if h is None:
                h = self.table(i)
                cache[i] = h
            out.append(h)
        return out

    def histogram(self) -> "OutputHistogram":
        counts: dict[Hypothesis, int] = {}
        uniq, cnt = np.unique(self.indices, return_counts=True)
        for i, c in zip(uniq.tolist(), cnt.tolist()):
            h = self.table(i)
            counts[h] = counts.get(h, 0) + c
        return OutputHistogram(
            counts=counts, trials=self.trials, n=self.n, seed=self.seed,
            trial_start=self.trial_start, fallbacks=int(self.fallback.sum()),
            learner=self.learner, dist=self.dist)


@dataclass
class OutputHistogram:
    """Empirical output-frequency table of a learner on a distribution."""

    counts: dict
    trials: int
    n: int
    seed: int
    trial_start: int = 0
    fallbacks: int = 0
    learner: str = ""
    dist: str = ""

    def frequency(self, h: Hypothesis) -> float:
        return self.counts.get(h, 0) / self.trials

    def items_canonical(self):
        """(hypothesis, count) sorted by count desc, labels asc."""
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0].labels))

    def top(self, k: int) -> list[Hypothesis]:
        return [h for h, _ in self.items_canonical()[:k]]

    def merge(self, other: "OutputHistogram") -> "OutputHistogram":
        if (self.n, self.seed) != (other.n, other.seed):
            raise ValueError("estimators: merge needs identical (n, seed)")
        a = (self.trial_start, self.trial_start + self.trials)
        b = (other.trial_start, other.trial_start + other.trials)
        if max(a[0], b[0]) < min(a[1], b[1]):
            raise ValueError("estimators: merge needs disjoint trial ranges")
        counts = dict(self.counts)
        for h, c in other.counts.items():
            counts[h] = counts.get(h, 0) + c
        return OutputHistogram(
            counts=counts, trials=self.trials + other.trials, n=self.n,
            seed=self.seed, trial_start=min(a[0], b[0]),
            fallbacks=self.fallbacks + other.fallbacks,
            learner=self.learner, dist=self.dist)


@dataclass(frozen=True)
class StabilityReport:
    rho_hat: float
    modal: Hypothesis
    collision_hat: float
    ci_half_width: float
    trials: int
    n: int


def run_trials(a: Learner, dist: FiniteDistribution, n: int, trials: int,
               seed: int, trial_start: int = 0,
               force_sequential: bool = False) -> TrialRun:
    """Execute ``trials`` independent trials and keep per-trial outcomes."""
    if trials < 1:
        raise ValueError("estimators: trials must be >= 1")
    if n < 1:
        raise ValueError("estimators: sample size must be >= 1")
    prog = None
    if not force_sequential and a.batch_program is not None:
        prog = a.batch_program(dist)
        if not prog.accepts(n):
            prog = None
    if prog is not None:
        return _run_batch(a, dist, n, trials, seed, trial_start, prog)
    return _run_sequential(a, dist, n, trials, seed, trial_start)


def _run_batch(a, dist, n, trials, seed, trial_start, prog) -> TrialRun:
    ops = get_ops()
    cum = dist.cumulative()
    wants_draws = getattr(prog, "wants", "counts") == "draws"
    budget = 8_000_000 if wants_draws else 64_000_000
    step = max(1, budget // max(n, 1))
    idx_parts, fb_parts, mist_parts = [], [], []
    extras: dict[str, list] = {}
    for lo in range(0, trials, step):
        m = min(step, trials - lo)
        start = trial_start + lo
        keys = ops.derive_keys(seed, start, m, rng.ROLE_LEARNER)
        if wants_draws:
            data = ops.atom_draws(seed, rng.ROLE_SAMPLE, start, m, n, cum)
        else:
            data = ops.atom_counts(seed, rng.ROLE_SAMPLE, start, m, n, cum)
        try:
            idx, fb, mist = prog.select(data, keys, n, start)
        except StabilityLabError as e:
            raise type(e)(f"{e} [trials starting at {start}]") from e
        idx_parts.append(np.asarray(idx, dtype=np.int64))
        fb_parts.append(np.asarray(fb, dtype=bool))
        mist_parts.append(np.asarray(mist, dtype=np.int64))
        for k, v in getattr(prog, "last_extras", {}).items():
            extras.setdefault(k, []).append(v)
    return TrialRun(
        learner=a.name, dist=dist.name, n=n, trials=trials, seed=seed,
        trial_start=trial_start,
        indices=np.concatenate(idx_parts), fallback=np.concatenate(fb_parts),
        mistakes=np.concatenate(mist_parts),
        table=prog.hypothesis_for,
        extras={k: np.concatenate(v) for k, v in extras.items()})


def _run_sequential(a, dist, n, trials, seed, trial_start) -> TrialRun:
    table: list[Hypothesis] = []
    lookup: dict[tuple, int] = {}
    indices = np.empty(trials, dtype=np.int64)
    fallback = np.zeros(trials, dtype=bool)
    mistakes = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        t = trial_start + i
        sample = draw_sample(dist, n, rng.derive(seed, t, rng.ROLE_SAMPLE))
        try:
            out = a.evaluate_flagged(sample, rng.derive(seed, t, rng.ROLE_LEARNER))
        except StabilityLabError as e:
            raise type(e)(f"{e} [trial {t}]") from e
        h = out.hypothesis
        key = h.labels
        idx = lookup.get(key)
        if idx is None:
            idx = len(table)
            lookup[key] = idx
            table.append(h)
        indices[i] = idx
        fallback[i] = out.fallback
        mistakes[i] = sum(1 for ex in sample if h(ex.x) != ex.y)
    return TrialRun(
        learner=a.name, dist=dist.name, n=n, trials=trials, seed=seed,
        trial_start=trial_start, indices=indices, fallback=fallback,
        mistakes=mistakes, table=lambda i: table[i])


def output_histogram(a: Learner, dist: FiniteDistribution, n: int, trials: int,
                     seed: int, trial_start: int = 0, threads: int = 1,
                     force_sequential: bool = False) -> OutputHistogram:
    """Histogram of outputs over seeded trials.

    With ``threads > 1`` the trial range is split into fixed chunks that
    run concurrently and merge in order; results are identical for every
    thread count.
    """
    if threads <= 1 or trials < 256:
        return run_trials(a, dist, n, trials, seed, trial_start,
                          force_sequential).histogram()
    from concurrent.futures import ThreadPoolExecutor
    chunk = max(128, math.ceil(trials / (threads * 4)))
    ranges = [(trial_start + lo, min(chunk, trials - lo))
              for lo in range(0, trials, chunk)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(
            lambda r: run_trials(a, dist, n, r[1], seed, r[0],
                                 force_sequential).histogram(), ranges))
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


def stability_report(hist: OutputHistogram, beta: float = DEFAULT_BETA) -> StabilityReport:
    """Modal frequency and collision estimate with an exact sandwich.

    The comparisons max >= sum-of-squares >= max^2 are certified in integer
    arithmetic on the raw counts before the float report is built.
    """
    if hist.trials < 1 or not hist.counts:
        raise ValueError("estimators: empty histogram")
    items = hist.items_canonical()
    modal, cmax = items[0]
    t = hist.trials
    sumsq = sum(c * c for _, c in items)
    assert cmax * t >= sumsq >= cmax * cmax, "frequency sandwich violated"
    return StabilityReport(
        rho_hat=cmax / t, modal=modal, collision_hat=sumsq / (t * t),
        ci_half_width=hoeffding_half_width(t, beta), trials=t, n=hist.n)


def shared_randomness_replicability(a: Learner, dist: FiniteDistribution,
                                    n: int, trials: int, seed: int,
                                    beta: float = DEFAULT_BETA) -> Estimate:
    """Agreement rate of two samples evaluated under one shared learner seed.

    Trial ``i`` reuses the learner key ``derive(seed, i, ROLE_LEARNER)`` on
    two independent samples keyed by ROLE_SAMPLE and ROLE_SAMPLE2.
    """
    if trials < 1:
        raise ValueError("estimators: trials must be >= 1")
    prog = a.batch_program(dist) if a.batch_program is not None else None
    if prog is not None and prog.accepts(n) and getattr(prog, "wants", "counts") == "counts":
        ops = get_ops()
        cum = dist.cumulative()
        agree = 0
        step = max(1, 64_000_000 // max(n, 1))
        for lo in range(0, trials, step):
            m = min(step, trials - lo)
            start = lo
            keys = ops.derive_keys(seed, start, m, rng.ROLE_LEARNER)
            c1 = ops.atom_counts(seed, rng.ROLE_SAMPLE, start, m, n, cum)
            c2 = ops.atom_counts(seed, rng.ROLE_SAMPLE2, start, m, n, cum)
            i1, _, _ = prog.select(c1, keys, n, start)
            i2, _, _ = prog.select(c2, keys, n, start)
            ident: dict[int, tuple] = {}
            for arr in (i1, i2):
                for v in np.unique(arr).tolist():
                    if v not in ident:
                        ident[v] = prog.hypothesis_for(v).labels
            l1 = [ident[v] for v in i1.tolist()]
            l2 = [ident[v] for v in i2.tolist()]
            agree += sum(1 for x, y in zip(l1, l2) if x == y)
    else:
        agree = 0
        for i in range(trials):
            r = rng.derive(seed, i, rng.ROLE_LEARNER)
            s1 = draw_sample(dist, n, rng.derive(seed, i, rng.ROLE_SAMPLE))
            s2 = draw_sample(dist, n, rng.derive(seed, i, rng.ROLE_SAMPLE2))
            if a.evaluate(s1, r) == a.evaluate(s2, r):
                agree += 1
    return Estimate(agree / trials, hoeffding_half_width(trials, beta), trials)


def list_coverage(hist: OutputHistogram, hyps: Iterable[Hypothesis]) -> float:
    """Fraction of trials whose output lies in the given list."""
    wanted = {h.labels for h in hyps}
    hit = sum(c for h, c in hist.counts.items() if h.labels in wanted)
    return hit / hist.trials


def exact_output_distribution(a: Learner, dist: FiniteDistribution,
                              n: int) -> dict[Hypothesis, float]:
    """Brute-force exact output law by sample enumeration.

    Supports deterministic learners directly; for the cube learner the
    cutoff randomness reduces to subintervals of [0, eps/(2d)] split at the
    observed point frequencies, weighted by subinterval length.
    """
    support = [(ex, float(m)) for ex, m in zip(dist.atoms, dist.masses) if m > 0.0]
    if len(support) ** n > ORACLE_BUDGET:
        raise CapExceededError(
            f"estimators: oracle budget {ORACLE_BUDGET} exceeded "
            f"({len(support)}^{n} samples)")
    is_cube = a.meta.get("kind") == "cube"
    if not (a.deterministic or is_cube):
        raise ValueError(
            "estimators: exact oracle needs a deterministic learner or the cube learner")
    out: dict[Hypothesis, float] = {}
    for seq in itertools.product(support, repeat=n):
        p = 1.0
        for _, m in seq:
            p *= m
        sample = Sample(tuple(ex for ex, _ in seq))
        if is_cube:
            for h, w in _cube_outputs_by_cutoff(a, sample):
                out[h] = out.get(h, 0.0) + p * w
        else:
            h = a.evaluate(sample, 0)
            out[h] = out.get(h, 0.0) + p
    total = math.fsum(out.values())
    assert abs(total - 1.0) <= 1e-12, f"oracle mass {total} != 1"
    return out


def _cube_outputs_by_cutoff(a: Learner, sample: Sample):
    """(hypothesis, probability weight) pairs over the cutoff interval."""
    d = a.meta["d"]
    scale = a.meta["scale"]
    domain = a.domain
    counts = [0] * d
    seen = [0] * d
    for ex in sample:
        pos = domain.position(ex.x)
        counts[pos] += 1
        if seen[pos] == 0:
            seen[pos] = ex.y
        elif seen[pos] != ex.y:
            raise RealizabilityViolationError(
                f"estimators: oracle sample labels point {ex.x!r} both ways")
    freqs = sorted({counts[p] / sample.n for p in range(d)
                    if 0 < counts[p] / sample.n < scale})
    cuts = [0.0] + freqs + [scale]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        kappa = 0.5 * (lo + hi)
        labels = tuple(
            seen[p] if counts[p] > 0 and counts[p] / sample.n >= kappa else 1
            for p in range(d))
        yield Hypothesis(domain, labels), (hi - lo) / scale
