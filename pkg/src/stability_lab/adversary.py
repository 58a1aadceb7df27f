"""Instability witnesses and the numerical hard-distribution search.

A witness of size k packages a map from coordinate/sign pairs to labeled
points, an anchor example, and a partition of the output class into k+1
cells.  It induces the distribution family D_t over t in [-1, 1]^k and the
score functions

    g_j(t) = Pr[output in cell 0] - Pr[output in cell j] + damping * t_j.

When the tested learner keeps its empirical loss below 1/k, the g_j carry
opposite signs on opposite faces of the cube, so a common root t* exists;
at t* no cell (hence no single hypothesis) can be output with frequency
much above 1/(k+1).  The search locates t* by coordinate-wise bisection
with confidence-aware sign decisions under Monte Carlo noise.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import rng
from .concepts import ConceptClass, Hypothesis, Point
from .distributions import (FiniteDistribution, LabeledExample,
                            witness_distribution)
from .errors import (BoundaryPreconditionError, CapExceededError,
                     WitnessValidationError)
from .estimators import (DEFAULT_BETA, OutputHistogram, hoeffding_half_width,
                         output_histogram)
from .learners import Learner

VALIDATION_BUDGET = 10_000_000


@dataclass(frozen=True)
class PartitionCell:
    """A conjunctive membership predicate: h(x) == y for every constraint."""

    constraints: tuple[tuple[Point, int], ...]

    def matches(self, h: Hypothesis) -> bool:
        return all(h(x) == y for x, y in self.constraints)


@dataclass(frozen=True)
class InstabilityWitness:
    """Size-k witness: W maps, anchor, and a (k+1)-cell output partition."""

    k: int
    w_x: dict
    w_pm: dict
    anchor: LabeledExample
    partition: tuple[PartitionCell, ...]
    name: str = ""

    def __post_init__(self):
        if self.k < 1:
            raise WitnessValidationError("adversary: witness size k must be >= 1")
        for j in range(1, self.k + 1):
            for sign in (-1, 1):
                if (j, sign) not in self.w_x or (j, sign) not in self.w_pm:
                    raise WitnessValidationError(
                        f"adversary: witness map misses coordinate ({j}, {sign:+d})")
        if len(self.partition) != self.k + 1:
            raise WitnessValidationError(
                f"adversary: witness needs k+1 = {self.k + 1} partition cells, "
                f"got {len(self.partition)}")

    def atom(self, j: int, sign: int) -> LabeledExample:
        return LabeledExample(self.w_x[(j, sign)], self.w_pm[(j, sign)])

    def classify(self, h: Hypothesis) -> Optional[int]:
        """Index of the first matching cell, or None."""
        for i, cell in enumerate(self.partition):
            if cell.matches(h):
                return i
        return None


def cube_witness(d: int) -> InstabilityWitness:
    """The shattered-set witness of size d-1 for the full cube on [d].

    With points x_0..x_{d-1}, coordinate j points at (x_j, ±); the anchor
    is (x_0, +).  Cell 0 holds the hypotheses that are + on x_1..x_{d-1};
    cell j those that are + on x_1..x_{j-1} and - on x_j.
    """
    if d < 2:
        raise ValueError("adversary: cube witness needs d >= 2")
    pts = tuple(range(1, d + 1))  # pts[i] plays x_i
    k = d - 1
    w_x = {(j, s): pts[j] for j in range(1, k + 1) for s in (-1, 1)}
    w_pm = {(j, s): s for j in range(1, k + 1) for s in (-1, 1)}
    cells = [PartitionCell(tuple((pts[i], 1) for i in range(1, d)))]
    for j in range(1, k + 1):
        cons = tuple((pts[i], 1) for i in range(1, j)) + ((pts[j], -1),)
        cells.append(PartitionCell(cons))
    return InstabilityWitness(k=k, w_x=w_x, w_pm=w_pm,
                              anchor=LabeledExample(pts[0], 1),
                              partition=tuple(cells), name=f"cube-witness:{d}")


def hollow_star_witness(c: ConceptClass, star_points: Sequence[Point]) -> InstabilityWitness:
    """The hollow-star witness of size s-2 over star points x_0..x_{s-1}.

    Requires that the projection of the class onto the star misses the
    all-minus pattern while containing every one-flip neighbor of it.
    Coordinate j maps - to (x_1, -) and + to (x_{j+1}, -); the anchor is
    (x_0, -).  Cell 0 holds hypotheses that are + on x_1; cell j those
    - on x_1..x_j and + on x_{j+1}.
    """
    pts = tuple(star_points)
    s = len(pts)
    if s < 3:
        raise WitnessValidationError("adversary: hollow star witness needs s >= 3")
    for x in pts:
        if x not in c.domain:
            raise WitnessValidationError(
                f"adversary: star point {x!r} outside the class domain")
    positions = [c.domain.position(x) for x in pts]
    proj = {tuple(h.labels[p] for p in positions) for h in c}
    if tuple([-1] * s) in proj:
        raise WitnessValidationError(
            "adversary: star is not hollow (all-minus pattern present)")
    for j in range(s):
        neighbor = tuple(1 if i == j else -1 for i in range(s))
        if neighbor not in proj:
            raise WitnessValidationError(
                f"adversary: missing neighbor with + only at star point {pts[j]!r}")
    k = s - 2
    w_x = {}
    w_pm = {}
    for j in range(1, k + 1):
        w_x[(j, -1)] = pts[1]
        w_x[(j, 1)] = pts[j + 1]
        w_pm[(j, -1)] = -1
        w_pm[(j, 1)] = -1
    cells = [PartitionCell(((pts[1], 1),))]
    for j in range(1, k + 1):
        cons = tuple((pts[i], -1) for i in range(1, j + 1)) + ((pts[j + 1], 1),)
        cells.append(PartitionCell(cons))
    return InstabilityWitness(k=k, w_x=w_x, w_pm=w_pm,
                              anchor=LabeledExample(pts[0], -1),
                              partition=tuple(cells),
                              name=f"hollow-star-witness:{s}")


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    failures: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_witness(w: InstabilityWitness, c: ConceptClass,
                     f: ConceptClass, budget: int = VALIDATION_BUDGET) -> ValidationResult:
    """Exhaustively check both witness requirements.

    Requirement 1: for every sign vector some class member realizes the
    anchor together with the selected witness atoms, and no selected atom
    collides with the anchor.  Requirement 2: the cells partition the
    output class disjointly and satisfy the two mislabeling conditions.
    """
    k = w.k
    if (2 ** k) * max(len(c), 1) > budget:
        raise CapExceededError(
            f"adversary: validation budget {budget} exceeded (2^{k} * {len(c)})")
    failures: list[str] = []

    for sigma in itertools.product((-1, 1), repeat=k):
        atoms = [w.atom(j, sigma[j - 1]) for j in range(1, k + 1)]
        if any(a == w.anchor for a in atoms):
            failures.append(
                f"realizability anchor conflict at sigma={sigma}")
            continue
        ok = any(
            h(w.anchor.x) == w.anchor.y and all(h(a.x) == a.y for a in atoms)
            for h in c)
        if not ok:
            failures.append(f"no class member realizes sigma={sigma}")

    for h in f:
        matches = [i for i, cell in enumerate(w.partition) if cell.matches(h)]
        if len(matches) > 1:
            failures.append(
                f"partition not disjoint: {h.pattern()} in cells {matches}")
        elif not matches:
            failures.append(
                f"partition does not cover output class: {h.pattern()} unassigned")

    for j in range(1, k + 1):
        a_minus = w.atom(j, -1)
        for h in f:
            if w.partition[0].matches(h) and h(a_minus.x) == a_minus.y:
                failures.append(
                    f"cell 0 member {h.pattern()} agrees with W({j},-)")
        a_plus = w.atom(j, 1)
        for h in f:
            if w.partition[j].matches(h) and h(a_plus.x) == a_plus.y:
                failures.append(
                    f"cell {j} member {h.pattern()} agrees with W({j},+)")

    return ValidationResult(ok=not failures, failures=tuple(failures))


@dataclass(frozen=True)
class GEstimate:
    """One evaluation of the score vector at a parameter point t."""

    t: tuple[float, ...]
    g: np.ndarray                 # k damped score components
    cell_freq: np.ndarray         # k+1 cell frequencies
    other_freq: float             # outputs matching no cell
    ci_half_width: float
    trials: int
    histogram: OutputHistogram


def g_vector(a: Learner, w: InstabilityWitness, t: Sequence[float],
             damping: float, n: int, mc: int, seed: int,
             beta: float = DEFAULT_BETA) -> GEstimate:
    """Estimate all g_j at one t from a single shared histogram.

    One histogram of ``mc`` trials on D_t serves every component (common
    random numbers across j), so differences between cell frequencies are
    measured on the same draws.
    """
    if a.empirical_bound is None:
        raise BoundaryPreconditionError(
            "adversary: learner carries no empirical-loss bound; wrap it first")
    if a.empirical_bound >= 1.0 / w.k:
        raise BoundaryPreconditionError(
            f"adversary: empirical bound {a.empirical_bound} is not below 1/k = {1.0 / w.k}")
    dist = witness_distribution(w, t)
    hist = output_histogram(a, dist, n, mc, seed)
    freq = np.zeros(w.k + 1, dtype=np.float64)
    other = 0.0
    for h, cnt in hist.counts.items():
        cell = w.classify(h)
        if cell is None:
            other += cnt
        else:
            freq[cell] += cnt
    freq /= hist.trials
    other /= hist.trials
    g = np.array([freq[0] - freq[j] + damping * float(t[j - 1])
                  for j in range(1, w.k + 1)])
    return GEstimate(t=tuple(float(v) for v in t), g=g, cell_freq=freq,
                     other_freq=other, ci_half_width=hoeffding_half_width(mc, beta),
                     trials=mc, histogram=hist)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the hard-distribution search."""

    damping: float = 0.02
    n: int = 400
    mc: int = 5000
    tol: float = 0.02
    max_sweeps: int = 6
    max_doublings: int = 2      # budget cap: per decision at most mc * 2**this
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if self.damping <= 0 or self.tol <= 0:
            raise ValueError("adversary: damping and tol must be positive")
        if self.n < 1 or self.mc < 1 or self.max_sweeps < 1:
            raise ValueError("adversary: n, mc, max_sweeps must be >= 1")


@dataclass
class InstabilityCertificate:
    """Outcome of the search: the located distribution and its frequencies."""

    witness: InstabilityWitness
    t_star: tuple[float, ...]
    residual: float
    distribution: FiniteDistribution
    cell_frequencies: dict
    max_frequency: float
    modal: Hypothesis
    ci_half_width: float
    bound: float
    status: str
    trials: int
    n: int
    sweeps: int
    total_trials_spent: int
    boundary_report: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "t_star": list(self.t_star),
            "residual": self.residual,
            "distribution": {"atoms": [
                {"x": ex.x, "y": ex.y, "p": float(m)}
                for ex, m in zip(self.distribution.atoms, self.distribution.masses)]},
            "frequencies": self.cell_frequencies,
            "max_frequency": self.max_frequency,
            "ci": self.ci_half_width,
            "bound": self.bound,
            "status": self.status,
            "modal": self.modal.pattern(),
            "trials": self.trials,
            "n": self.n,
            "sweeps": self.sweeps,
            "total_trials_spent": self.total_trials_spent,
            "boundary": self.boundary_report,
        }


def find_hard_distribution(a: Learner, w: InstabilityWitness, c: ConceptClass,
                           config: SolverConfig, seed: int,
                           f: ConceptClass | None = None) -> InstabilityCertificate:
    """Locate a root of the score vector and certify the frequency bound.

    Refuses invalid witnesses and learners that fail the face sign
    conditions.  Runs Gauss-Seidel coordinate bisection: each sweep
    re-bisects every coordinate on [-1, 1] with confidence-aware sign
    decisions (doubling the trial budget near the root, up to the cap) and
    ends with a fresh full evaluation at the current t; the search stops
    once the measured residual max_j |g_j| is within tolerance.
    """
    if f is None:
        f = a.output_class()
    check = validate_witness(w, c, f)
    if not check:
        raise WitnessValidationError(
            "adversary: witness failed validation: " + "; ".join(check.failures[:4]))
    k = w.k
    spent = 0
    eval_counter = 0

    def evaluate(t, mc):
        nonlocal spent, eval_counter
        est = g_vector(a, w, t, config.damping, config.n, mc,
                       rng.derive(seed, eval_counter, rng.ROLE_GEVAL),
                       beta=config.beta)
        eval_counter += 1
        spent += mc
        return est

    # face sign preconditions, evaluated at the face centers
    slack = hoeffding_half_width(config.mc, config.beta)
    boundary = {}
    for j in range(1, k + 1):
        for sign in (-1, 1):
            t = [0.0] * k
            t[j - 1] = float(sign)
            est = evaluate(t, config.mc)
            val = est.g[j - 1]
            boundary[f"g{j}@t{j}={sign:+d}"] = float(val)
            if sign < 0 and val > slack:
                raise BoundaryPreconditionError(
                    f"adversary: learner violates empirical precondition: "
                    f"g_{j} = {val:.4f} > {slack:.4f} on the t_{j} = -1 face")
            if sign > 0 and val < -slack:
                raise BoundaryPreconditionError(
                    f"adversary: learner violates empirical precondition: "
                    f"g_{j} = {val:.4f} < -{slack:.4f} on the t_{j} = +1 face")

    t = [0.0] * k
    min_interval = max(1e-8, config.tol / (4.0 * config.n))
    final: GEstimate | None = None
    sweeps_used = 0
    for sweep in range(1, config.max_sweeps + 1):
        sweeps_used = sweep
        for j in range(k):
            lo, hi = -1.0, 1.0
            while hi - lo > min_interval:
                mid = 0.5 * (lo + hi)
                t[j] = mid
                mc_now = config.mc
                est = evaluate(t, mc_now)
                val = est.g[j]
                while (abs(val) <= hoeffding_half_width(mc_now, config.beta)
                       and mc_now < config.mc * (2 ** config.max_doublings)):
                    mc_now *= 2
                    est = evaluate(t, mc_now)
                    val = est.g[j]
                if abs(val) <= hoeffding_half_width(mc_now, config.beta):
                    break  # within noise of the root; keep the midpoint
                if val > 0:
                    hi = mid
                else:
                    lo = mid
            t[j] = 0.5 * (lo + hi)
        final = evaluate(t, config.mc)
        if float(np.max(np.abs(final.g))) <= config.tol:
            break

    assert final is not None
    residual = float(np.max(np.abs(final.g)))
    status = "converged" if residual <= config.tol else "unconverged"
    report = stability_like(final.histogram)
    freqs = {f"F_{i}": float(v) for i, v in enumerate(final.cell_freq)}
    freqs["other"] = float(final.other_freq)
    return InstabilityCertificate(
        witness=w, t_star=tuple(t), residual=residual,
        distribution=witness_distribution(w, t),
        cell_frequencies=freqs,
        max_frequency=report[0], modal=report[1],
        ci_half_width=hoeffding_half_width(final.trials, config.beta),
        bound=1.0 / (k + 1), status=status, trials=final.trials, n=config.n,
        sweeps=sweeps_used, total_trials_spent=spent,
        boundary_report=boundary)


def stability_like(hist: OutputHistogram) -> tuple[float, Hypothesis]:
    """(modal frequency, modal hypothesis) with the canonical tie-break."""
    items = hist.items_canonical()
    h, c = items[0]
    return c / hist.trials, h


# ---------------------------------------------------------------------------
# JSON witness interchange


def save_witness(w: InstabilityWitness, path: str) -> None:
    payload = {
        "k": w.k,
        "anchor": {"x": w.anchor.x, "y": w.anchor.y},
        "w": [{"j": j, "sign": s, "x": w.w_x[(j, s)], "y": w.w_pm[(j, s)]}
              for j in range(1, w.k + 1) for s in (-1, 1)],
        "partition": [[[x, y] for x, y in cell.constraints]
                      for cell in w.partition],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_witness(path: str) -> InstabilityWitness:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    w_x, w_pm = {}, {}
    for row in payload["w"]:
        w_x[(int(row["j"]), int(row["sign"]))] = row["x"]
        w_pm[(int(row["j"]), int(row["sign"]))] = int(row["y"])
    cells = tuple(PartitionCell(tuple((x, int(y)) for x, y in cell))
                  for cell in payload["partition"])
    return InstabilityWitness(
        k=int(payload["k"]), w_x=w_x, w_pm=w_pm,
        anchor=LabeledExample(payload["anchor"]["x"], int(payload["anchor"]["y"])),
        partition=cells, name=path)
