"""Learning rules: the learner contract and the concrete built-in rules.

A learner is a pure function (sample, seed) -> hypothesis.  The seed is a
counter-stream key (see :mod:`stability_lab.rng`); deterministic rules
ignore it.  Each built-in rule also ships a *batch program*, a vectorized
evaluator over per-trial atom-count matrices that reproduces the
sequential semantics bit for bit on the active kernel backend.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng
from .concepts import ConceptClass, Domain, Hypothesis, make_cube, make_singletons, make_thresholds, load_class
from .distributions import (FiniteDistribution, LabeledExample, Sample,
                            empirical_distribution)
from .errors import (DomainMismatchError, EmpiricalLearnerViolationError,
                     RealizabilityViolationError)
from .kernels import get_ops


@dataclass(frozen=True)
class EvalOutcome:
    hypothesis: Hypothesis
    fallback: bool = False


@dataclass(frozen=True)
class Learner:
    """A named learning rule with optional metadata used by the harness.

    ``empirical_bound`` is the guaranteed empirical loss of outputs on
    consistent inputs (None when no guarantee holds); the adversary search
    requires it.  ``batch_program``, when present, maps a distribution to a
    vectorized evaluator used by the estimators' fast path.
    """

    name: str
    domain: Domain
    evaluate_flagged: Callable[[Sample, int], EvalOutcome]
    proper: bool = False
    concept_class: Optional[ConceptClass] = None
    sample_size: Optional[Callable[[float, float], int]] = None
    empirical_bound: Optional[float] = None
    deterministic: bool = False
    meta: dict = field(default_factory=dict, compare=False)
    batch_program: Optional[Callable[[FiniteDistribution], "BatchProgram"]] = field(
        default=None, compare=False)

    def evaluate(self, sample: Sample, seed: int) -> Hypothesis:
        return self.evaluate_flagged(sample, seed).hypothesis

    def output_class(self) -> ConceptClass:
        """The class the outputs live in: the concept class when proper,
        otherwise the full cube over the domain."""
        if self.proper and self.concept_class is not None:
            return self.concept_class
        return full_cube(self.domain)

    def __repr__(self):
        return f"Learner({self.name})"


def full_cube(domain: Domain) -> ConceptClass:
    """All labelings of an arbitrary domain, lexicographic order."""
    import itertools
    rows = itertools.product((-1, 1), repeat=domain.size)
    return ConceptClass.from_labels(domain.points, rows, name=f"full-cube:{domain.size}")


def all_plus(domain: Domain) -> Hypothesis:
    """The a-priori fixed fallback hypothesis: + everywhere."""
    return Hypothesis(domain, (1,) * domain.size)


# ---------------------------------------------------------------------------
# shared batch-program plumbing


def _atoms_layout(dist: FiniteDistribution, domain: Domain):
    """Atom positions and labels resolved against a domain."""
    dist.check_domain(domain, "batch evaluation")
    pos = np.array([domain.position(ex.x) for ex in dist.atoms], dtype=np.int64)
    sign = np.array([ex.y for ex in dist.atoms], dtype=np.int64)
    return pos, sign


def _mismatch_matrix(dist: FiniteDistribution, c: ConceptClass) -> np.ndarray:
    """(A, |C|) 0/1 matrix: hypothesis h mislabels atom a."""
    pos, sign = _atoms_layout(dist, c.domain)
    labels = c.label_matrix()  # (H, d)
    return (labels[:, pos].T != sign[:, None]).astype(np.int64)


class BatchProgram:
    """Vectorized per-trial evaluation over atom-count matrices.

    ``select(counts, keys, n, trial_start)`` returns (table indices,
    fallback flags, mistake counts of the chosen output on its sample).
    Programs that need raw draw sequences instead of count matrices set
    ``wants = "draws"``.
    """

    wants = "counts"

    def accepts(self, n: int) -> bool:
        return True

    def select(self, counts, keys, n, trial_start):  # pragma: no cover
        raise NotImplementedError

    def hypothesis_for(self, idx: int) -> Hypothesis:  # pragma: no cover
        raise NotImplementedError


class _ErmProgram(BatchProgram):
    def __init__(self, dist, c: ConceptClass):
        self.mism = _mismatch_matrix(dist, c)
        self.table = c.hypotheses

    def select(self, counts, keys, n, trial_start):
        idx, mist = get_ops().select_erm(counts, self.mism)
        return idx, np.zeros(len(idx), dtype=bool), mist

    def hypothesis_for(self, idx):
        return self.table[idx]


class _ThresholdProgram(BatchProgram):
    def __init__(self, dist, c: ConceptClass, sigmas: np.ndarray):
        self.mism = _mismatch_matrix(dist, c)
        self.table = c.hypotheses
        self.sigmas = sigmas

    def select(self, counts, keys, n, trial_start):
        idx, fb, mist = get_ops().select_threshold(counts, self.mism, n, self.sigmas)
        return idx, fb, mist

    def hypothesis_for(self, idx):
        return self.table[idx]


class _CubeProgram(BatchProgram):
    def __init__(self, dist, domain: Domain, scale: float):
        self.atom_pos, self.atom_sign = _atoms_layout(dist, domain)
        self.domain = domain
        self.d = domain.size
        self.scale = scale
        self._cache: dict[int, Hypothesis] = {}

    def select(self, counts, keys, n, trial_start):
        ops = get_ops()
        kappas = ops.first_uniforms(keys) * self.scale
        rank, conflict, mist = ops.select_cube(
            counts, self.atom_pos, self.atom_sign, self.d, n, kappas)
        if conflict.any():
            first = int(np.argmax(conflict))
            raise RealizabilityViolationError(
                f"learners: cube learner saw both labels of one point "
                f"(trial {trial_start + first})")
        return rank, np.zeros(len(rank), dtype=bool), mist

    def hypothesis_for(self, idx):
        h = self._cache.get(idx)
        if h is None:
            bits = [(idx >> (self.d - 1 - i)) & 1 for i in range(self.d)]
            h = Hypothesis(self.domain, tuple(1 if b else -1 for b in bits))
            self._cache[idx] = h
        return h


class _EmpiricalizeProgram(BatchProgram):
    def __init__(self, dist, inner: BatchProgram, c: ConceptClass, bound: float):
        self.inner = inner
        self.erm = _ErmProgram(dist, c)
        self.bound = bound
        self.offset = None  # inner tables may be unbounded (cube ranks)

    def select(self, counts, keys, n, trial_start):
        idx, fb, mist = self.inner.select(counts, keys, n, trial_start)
        keep = (mist / float(n)) <= self.bound
        if keep.all():
            return idx, fb, mist
        erm_idx, erm_mist = get_ops().select_erm(counts, self.erm.mism)
        bad = ~keep & ((erm_mist / float(n)) >= self.bound)
        if bad.any():
            first = int(np.argmax(bad))
            raise EmpiricalLearnerViolationError(
                f"learners: no hypothesis below empirical bound {self.bound} "
                f"(trial {trial_start + first})")
        # encode replacements as negative indices: -(class index + 1)
        out = np.where(keep, idx, -(erm_idx + 1))
        out_mist = np.where(keep, mist, erm_mist)
        return out, np.where(keep, fb, False), out_mist

    def hypothesis_for(self, idx):
        if idx < 0:
            return self.erm.table[-idx - 1]
        return self.inner.hypothesis_for(idx)


class _FirstExampleProgram(BatchProgram):
    def __init__(self, dist, table_for_atom, default: Hypothesis):
        self.table = [table_for_atom.get(ex, default) for ex in dist.atoms]
        # one draw: a mistake iff the dispatched hypothesis mislabels its atom
        self.atom_mist = np.array(
            [1 if h(ex.x) != ex.y else 0 for ex, h in zip(dist.atoms, self.table)],
            dtype=np.int64)

    def accepts(self, n: int) -> bool:
        return n == 1

    def select(self, counts, keys, n, trial_start):
        if n != 1:
            raise ValueError(
                "learners: first-example dispatch fast path requires n=1")
        idx = np.argmax(counts, axis=1).astype(np.int64)
        return idx, np.zeros(len(idx), dtype=bool), self.atom_mist[idx]

    def hypothesis_for(self, idx):
        return self.table[idx]


# ---------------------------------------------------------------------------
# concrete learners


def _sample_layout(sample: Sample, domain: Domain):
    try:
        pos = np.array([domain.position(ex.x) for ex in sample], dtype=np.int64)
    except KeyError as e:
        raise DomainMismatchError(
            f"learners: sample point {e.args[0]!r} outside the learner domain") from None
    ys = np.array([ex.y for ex in sample], dtype=np.int64)
    return pos, ys


def _erm_index(sample: Sample, c: ConceptClass) -> tuple[int, int]:
    """Canonically-first empirical loss minimizer and its mistake count."""
    if sample.n == 0:
        raise ValueError("learners: erm needs a nonempty sample")
    pos, ys = _sample_layout(sample, c.domain)
    labels = c.label_matrix()
    mistakes = (labels[:, pos] != ys[None, :]).sum(axis=1)
    idx = int(np.argmin(mistakes))
    return idx, int(mistakes[idx])


def erm_learner(c: ConceptClass) -> Learner:
    """Canonically-first empirical loss minimizer in the class; ignores
    the seed."""
    if len(c) == 0:
        raise ValueError("learners: erm needs a nonempty class")

    def run(sample: Sample, seed: int) -> EvalOutcome:
        idx, _ = _erm_index(sample, c)
        return EvalOutcome(c.hypotheses[idx])

    def pac_n(eps: float, delta: float) -> int:
        return max(1, math.ceil(math.log(max(len(c), 2) / delta) / eps))

    return Learner(
        name=f"erm({c.name})", domain=c.domain, evaluate_flagged=run,
        proper=True, concept_class=c, sample_size=pac_n, deterministic=True,
        batch_program=lambda dist: _ErmProgram(dist, c))


def cube_learner(d: int, eps: float) -> Learner:
    """Random-cutoff frequency learner for the full cube on d points.

    Draws kappa uniform in [0, eps/(2d)] from the seed, keeps the points
    whose empirical frequency reaches kappa with their observed labels,
    and labels everything else +.  Requires per-point consistent labels.
    """
    if not 0 < eps < 1:
        raise ValueError("learners: cube learner needs eps in (0, 1)")
    c = make_cube(d)
    domain = c.domain
    scale = eps / (2 * d)

    def run(sample: Sample, seed: int) -> EvalOutcome:
        kappa = rng.uniform(seed, 0) * scale
        counts = [0] * d
        seen_label = [0] * d
        for ex in sample:
            p = domain.position(ex.x)
            counts[p] += 1
            if seen_label[p] == 0:
                seen_label[p] = ex.y
            elif seen_label[p] != ex.y:
                raise RealizabilityViolationError(
                    f"learners: cube learner saw both labels of point {ex.x!r}")
        n = sample.n
        labels = []
        for p in range(d):
            if counts[p] > 0 and counts[p] / n >= kappa:
                labels.append(seen_label[p])
            else:
                labels.append(1)
        return EvalOutcome(Hypothesis(domain, tuple(labels)))

    def hoeffding_n(e: float, delta: float) -> int:
        # resolve point frequencies at scale delta*eps/(8d), two-sided
        gamma = delta * e / (16 * d)
        return math.ceil(math.log(4 * d / delta) / (2 * gamma * gamma))

    return Learner(
        name=f"cube(d={d},eps={eps})", domain=domain, evaluate_flagged=run,
        proper=True, concept_class=c, sample_size=hoeffding_n,
        empirical_bound=eps / 2, meta={"kind": "cube", "d": d, "scale": scale},
        batch_program=lambda dist: _CubeProgram(dist, domain, scale))


def threshold_sigmas(t: int, eps: float) -> np.ndarray:
    """Per-index cutoffs eps / (2 (t - i + 1)) for i = 1..t."""
    return np.array([eps / (2 * (t - i + 1)) for i in range(1, t + 1)])


def threshold_learner(t: int, eps: float) -> Learner:
    """Proper deterministic threshold rule: the smallest index whose
    empirical loss beats its cutoff; falls back to the all-minus threshold
    (flagged) when no index qualifies."""
    if t < 3:
        raise ValueError("learners: threshold learner needs t >= 3")
    if not 0 < eps < 1:
        raise ValueError("learners: threshold learner needs eps in (0, 1)")
    c = make_thresholds(t)
    sigmas = threshold_sigmas(t, eps)
    if t <= 64:
        gap = eps / (10 * t * t)
        for i in range(t - 1):
            assert sigmas[i + 1] >= sigmas[i] + gap, "cutoff monotonicity broken"

    def run(sample: Sample, seed: int) -> EvalOutcome:
        if sample.n == 0:
            raise ValueError("learners: threshold learner needs a nonempty sample")
        pos, ys = _sample_layout(sample, c.domain)
        labels = c.label_matrix()
        mistakes = (labels[:, pos] != ys[None, :]).sum(axis=1)
        n = sample.n
        for i in range(t):
            if mistakes[i] / n < sigmas[i]:
                return EvalOutcome(c.hypotheses[i])
        return EvalOutcome(c.hypotheses[t - 1], fallback=True)

    def hoeffding_n(e: float, delta: float) -> int:
        gamma = e / (40 * t * t)
        return math.ceil(math.log(4 * t / delta) / (2 * gamma * gamma))

    return Learner(
        name=f"thresholds(t={t},eps={eps})", domain=c.domain,
        evaluate_flagged=run, proper=True, concept_class=c,
        sample_size=hoeffding_n, empirical_bound=eps / 2, deterministic=True,
        batch_program=lambda dist: _ThresholdProgram(dist, c, sigmas))


def empiricalize(inner: Learner, c: ConceptClass, eps: float, delta: float) -> Learner:
    """Wrap a learner so its output always has empirical loss <= eps + delta.

    Keeps the inner output when it already qualifies, otherwise substitutes
    the class ERM output; raises when even that sits at or above the bound.
    """
    bound = eps + delta
    if c.domain != inner.domain:
        raise DomainMismatchError("learners: empiricalize class domain mismatch")

    def run(sample: Sample, seed: int) -> EvalOutcome:
        out = inner.evaluate_flagged(sample, seed)
        pos, ys = _sample_layout(sample, c.domain)
        hl = np.array(out.hypothesis.labels, dtype=np.int64)
        mist = int((hl[pos] != ys).sum())
        if mist / sample.n <= bound:
            return out
        idx, erm_mist = _erm_index(sample, c)
        if erm_mist / sample.n >= bound:
            raise EmpiricalLearnerViolationError(
                f"learners: no hypothesis below empirical bound {bound}")
        return EvalOutcome(c.hypotheses[idx])

    inner_prog = inner.batch_program

    def program(dist):
        if inner_prog is None:
            raise ValueError("learners: empiricalize fast path needs an inner fast path")
        return _EmpiricalizeProgram(dist, inner_prog(dist), c, bound)

    proper = inner.proper and inner.concept_class is not None and (
        inner.concept_class.domain == c.domain
        and [h.labels for h in inner.concept_class] == [h.labels for h in c])
    return Learner(
        name=f"emp({inner.name},eps={eps},delta={delta})", domain=inner.domain,
        evaluate_flagged=run, proper=proper, concept_class=c,
        sample_size=inner.sample_size, empirical_bound=bound,
        deterministic=inner.deterministic,
        batch_program=program if inner_prog is not None else None)


def coloring_learner(color: Callable[[FiniteDistribution], Hypothesis],
                     n: int, domain: Domain, name: str = "coloring") -> Learner:
    """Applies a coloring of distribution space to the empirical
    distribution of the sample; the seed is unused."""

    def run(sample: Sample, seed: int) -> EvalOutcome:
        return EvalOutcome(color(empirical_distribution(sample)))

    return Learner(name=name, domain=domain, evaluate_flagged=run,
                   sample_size=lambda eps, delta: n, deterministic=True)


def first_example_learner(mapping: dict[LabeledExample, Hypothesis],
                          default: Hypothesis, name: str = "dispatch") -> Learner:
    """Deterministic dispatch on the first example of the sample.

    With single-draw samples this realizes any prescribed exact output law
    over the mapped hypotheses, which makes it the reference synthetic
    stable learner in tests.
    """
    domain = default.domain
    mapping = {LabeledExample(k[0], int(k[1])): v for k, v in mapping.items()}

    def run(sample: Sample, seed: int) -> EvalOutcome:
        if sample.n == 0:
            raise ValueError("learners: dispatch learner needs a nonempty sample")
        return EvalOutcome(mapping.get(sample.examples[0], default))

    return Learner(
        name=name, domain=domain, evaluate_flagged=run, deterministic=True,
        batch_program=lambda dist: _FirstExampleProgram(dist, mapping, default))


# ---------------------------------------------------------------------------
# spec-string parsing ("cube(d=3,eps=0.1)", "erm(class=cube:3)", ...)


def parse_class(spec: str) -> ConceptClass:
    m = re.fullmatch(r"cube:(\d+)", spec)
    if m:
        return make_cube(int(m.group(1)))
    m = re.fullmatch(r"thresholds:(\d+)", spec)
    if m:
        return make_thresholds(int(m.group(1)))
    m = re.fullmatch(r"singletons:(\d+)", spec)
    if m:
        return make_singletons(int(m.group(1)))
    if spec.endswith(".json"):
        return load_class(spec)
    raise ValueError(
        f"learners: unknown class spec {spec!r} "
        "(use cube:D, thresholds:T, singletons:S, or a .json file)")


def _split_top_level(s: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        parts.append(tail)
    return parts


def _parse_call(spec: str) -> tuple[str, dict[str, str]]:
    spec = spec.strip()
    m = re.fullmatch(r"([\w\-]+)\s*\((.*)\)", spec, flags=re.DOTALL)
    if not m:
        return spec, {}
    name, body = m.group(1), m.group(2).strip()
    kwargs = {}
    if body:
        for part in _split_top_level(body):
            if "=" not in part:
                raise ValueError(f"learners: malformed argument {part!r} in {spec!r}")
            k, v = part.split("=", 1)
            kwargs[k.strip()] = v.strip()
    return name, kwargs


def parse_learner(spec: str, context_class: ConceptClass | None = None) -> Learner:
    """Build a learner from its CLI spec string."""
    name, kw = _parse_call(spec)

    def klass() -> ConceptClass:
        if "class" in kw:
            return parse_class(kw["class"])
        if context_class is not None:
            return context_class
        raise ValueError(f"learners: {name!r} needs class=... or a --class context")

    if name == "cube":
        return cube_learner(int(kw["d"]), float(kw["eps"]))
    if name == "thresholds":
        return threshold_learner(int(kw["t"]), float(kw["eps"]))
    if name == "erm":
        return erm_learner(klass())
    if name == "erm-emp":
        c = klass()
        return empiricalize(erm_learner(c), c, float(kw["eps"]), float(kw["delta"]))
    if name == "boost":
        from .booster import boost, boost_params
        inner = parse_learner(kw["inner"], context_class=context_class)
        params = boost_params(rho=float(kw["rho"]), eps=float(kw["eps"]),
                              delta=float(kw["delta"]), n0=int(kw["n0"]))
        return boost(inner, params, all_plus(inner.domain))
    raise ValueError(f"learners: unknown learner spec {spec!r}")
