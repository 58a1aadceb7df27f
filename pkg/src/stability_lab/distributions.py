"""Finite-support distributions over labeled examples.

Atoms are (point, label) pairs with nonnegative masses summing to one.
Atom order is the construction order with duplicates merged into the first
occurrence; sampling and serialization both follow that order, so equal
construction paths give byte-identical behavior.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, TYPE_CHECKING

import numpy as np

from . import rng
from .concepts import ConceptClass, Domain, Hypothesis, Point
from .errors import DomainMismatchError

if TYPE_CHECKING:  # pragma: no cover
    from .adversary import InstabilityWitness

#: constructor gate on |sum of masses - 1|
NORMALIZATION_TOL = 1e-9


class LabeledExample(NamedTuple):
    x: Point
    y: int


@dataclass(frozen=True)
class Sample:
    """An ordered tuple of labeled examples, exactly as drawn."""

    examples: tuple[LabeledExample, ...]

    @property
    def n(self) -> int:
        return len(self.examples)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def slice(self, start: int, stop: int) -> "Sample":
        return Sample(self.examples[start:stop])


class FiniteDistribution:
    """Probability mass over labeled examples with finite support."""

    def __init__(self, atoms: Sequence[tuple[LabeledExample, float]], name: str = ""):
        merged: dict[LabeledExample, float] = {}
        order: list[LabeledExample] = []
        for ex, mass in atoms:
            ex = LabeledExample(ex[0], int(ex[1]))
            if ex.y not in (-1, 1):
                raise ValueError(f"distributions: label must be ±1, got {ex.y}")
            if mass < -1e-12:
                raise ValueError(f"distributions: negative mass {mass} at {ex}")
            if ex not in merged:
                merged[ex] = 0.0
                order.append(ex)
            merged[ex] += max(mass, 0.0)
        total = math.fsum(merged.values())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(
                f"distributions: masses sum to {total!r}, outside 1 ± {NORMALIZATION_TOL}")
        self.atoms = tuple(order)
        self.masses = np.array([merged[ex] / total for ex in order], dtype=np.float64)
        self.name = name

    @classmethod
    def from_weights(cls, atoms: Sequence[tuple[LabeledExample, float]],
                     name: str = "") -> "FiniteDistribution":
        """Normalize an arbitrary nonnegative weight vector."""
        total = math.fsum(float(w) for _, w in atoms)
        if total <= 0:
            raise ValueError("distributions: weights must have positive total")
        return cls([(ex, w / total) for ex, w in atoms], name=name)

    @property
    def support_size(self) -> int:
        return len(self.atoms)

    def mass_of(self, ex: LabeledExample) -> float:
        for a, m in zip(self.atoms, self.masses):
            if a == ex:
                return float(m)
        return 0.0

    def cumulative(self) -> np.ndarray:
        """Cumulative masses with the last entry forced to exactly 1.0."""
        cum = np.cumsum(self.masses)
        cum[-1] = 1.0
        return cum

    def points(self) -> tuple[Point, ...]:
        return tuple(ex.x for ex in self.atoms)

    def check_domain(self, domain: Domain, op: str) -> None:
        for ex in self.atoms:
            if ex.x not in domain:
                raise DomainMismatchError(
                    f"distributions: {op} got atom at point {ex.x!r} outside the domain")

    def __repr__(self):
        inner = ", ".join(f"({ex.x},{'+' if ex.y > 0 else '-'}):{m:.4g}"
                          for ex, m in zip(self.atoms, self.masses))
        return f"FiniteDistribution({inner})"


def population_loss(h: Hypothesis, dist: FiniteDistribution) -> float:
    """Mass of atoms (x, y) with h(x) != y."""
    dist.check_domain(h.domain, "population_loss")
    return math.fsum(m for ex, m in zip(dist.atoms, dist.masses) if h(ex.x) != ex.y)


def empirical_loss(h: Hypothesis, sample: Sample) -> float:
    """Fraction of sample examples misclassified by h."""
    if sample.n == 0:
        raise ValueError("distributions: empirical_loss of an empty sample")
    mistakes = sum(1 for ex in sample if h(ex.x) != ex.y)
    return mistakes / sample.n


def is_realizable(dist: FiniteDistribution, c: ConceptClass) -> bool:
    """True iff some hypothesis in the class has zero population loss."""
    dist.check_domain(c.domain, "is_realizable")
    return any(population_loss(h, dist) == 0.0 for h in c)


def draw_sample(dist: FiniteDistribution, n: int, seed: int) -> Sample:
    """n i.i.d. draws; identical (dist, n, seed) give identical samples.

    The seed is used directly as a counter stream key; draw c consumes
    counter c.
    """
    if n < 0:
        raise ValueError("distributions: sample size must be >= 0")
    if n == 0:
        return Sample(())
    cum = dist.cumulative()
    u = rng.uniforms(seed, n)
    idx = np.searchsorted(cum, u, side="right")
    return Sample(tuple(dist.atoms[i] for i in idx))


def empirical_distribution(sample: Sample) -> FiniteDistribution:
    """Atom masses proportional to occurrence counts in the sample."""
    if sample.n == 0:
        raise ValueError("distributions: empirical distribution of an empty sample")
    return FiniteDistribution.from_weights(
        [(ex, 1.0) for ex in sample], name="empirical")


def tv_distance(d1: FiniteDistribution, d2: FiniteDistribution) -> float:
    """(1/2) sum of |mass1 - mass2| over the union of supports."""
    support: list[LabeledExample] = list(d1.atoms)
    seen = set(d1.atoms)
    for ex in d2.atoms:
        if ex not in seen:
            support.append(ex)
    m1 = {ex: m for ex, m in zip(d1.atoms, d1.masses)}
    m2 = {ex: m for ex, m in zip(d2.atoms, d2.masses)}
    return 0.5 * math.fsum(abs(m1.get(ex, 0.0) - m2.get(ex, 0.0)) for ex in support)


def witness_distribution(witness: "InstabilityWitness", t: Sequence[float]) -> FiniteDistribution:
    """The hard-distribution family member D_t for t in [-1, 1]^k.

    Coordinate j adds mass |t_j| / k to the witness atom selected by the
    sign of t_j (sign(0) = +); the remaining 1 - sum |t_j| / k sits on the
    anchor.  Coincident atoms merge by mass addition.
    """
    k = witness.k
    t = [float(v) for v in t]
    if len(t) != k:
        raise ValueError(f"distributions: t has length {len(t)}, witness size is {k}")
    if any(abs(v) > 1.0 + 1e-12 for v in t):
        raise ValueError("distributions: t must lie in [-1, 1]^k")
    atoms: list[tuple[LabeledExample, float]] = []
    total = 0.0
    for j in range(1, k + 1):
        tj = t[j - 1]
        sign = 1 if tj >= 0.0 else -1
        mass = abs(tj) / k
        total += mass
        atoms.append((witness.atom(j, sign), mass))
    anchor_mass = 1.0 - total
    if anchor_mass < -1e-12:
        raise ValueError("distributions: |t| mass exceeds 1")
    return FiniteDistribution([(witness.anchor, max(anchor_mass, 0.0))] + atoms,
                              name=f"D_t{tuple(round(v, 6) for v in t)}")


def save_distribution(dist: FiniteDistribution, path: str) -> None:
    payload = {"atoms": [{"x": ex.x, "y": ex.y, "p": float(m)}
                         for ex, m in zip(dist.atoms, dist.masses)]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_distribution(path: str, name: str = "") -> FiniteDistribution:
    """Load ``{"atoms": [{"x": ..., "y": ±1, "p": ...}, ...]}``."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    atoms = [(LabeledExample(a["x"], int(a["y"])), float(a["p"]))
             for a in payload["atoms"]]
    return FiniteDistribution(atoms, name=name or path)
