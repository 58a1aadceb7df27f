"""Finite concept classes and brute-force combinatorial dimensions.

Hypotheses are total ±1 labelings of a fixed finite domain, canonicalized
as label tuples in domain order.  Unless a class supplies an explicit
ordering (thresholds and singletons do), hypotheses are kept in
lexicographic order over label patterns with -1 < +1; every tie-break in
the package refers back to this order.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CapExceededError

Point = str | int

#: default brute-force budgets; exceeding any of them raises CapExceededError
MAX_DOMAIN = 20
MAX_SHATTER_SUBSET = 12
MAX_LDIM_CLASS = 4096
MAX_LDIM_STATES = 200_000
MAX_HOLLOW_CAP = 20
MAX_CUBE_DIM = 16


@dataclass(frozen=True)
class Domain:
    """An ordered finite ground set; the order fixes all canonical choices."""

    points: tuple[Point, ...]

    def __post_init__(self):
        if len(set(self.points)) != len(self.points):
            raise ValueError("concepts: domain points must be unique")

    @property
    def size(self) -> int:
        return len(self.points)

    def position(self, x: Point) -> int:
        idx = self.index()
        if x not in idx:
            raise KeyError(x)
        return idx[x]

    def index(self) -> dict:
        if not hasattr(self, "_index"):
            object.__setattr__(self, "_index", {p: i for i, p in enumerate(self.points)})
        return self._index

    def __contains__(self, x: Point) -> bool:
        return x in self.index()

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Hypothesis:
    """A total ±1 labeling of a domain, stored in domain order.

    Equality and hashing use only the label pattern (and the domain),
    never the optional class-bound index.
    """

    domain: Domain
    labels: tuple[int, ...]
    index: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.labels) != self.domain.size:
            raise ValueError("concepts: hypothesis must label every domain point")
        if any(v not in (-1, 1) for v in self.labels):
            raise ValueError("concepts: labels must be -1 or +1")

    def __call__(self, x: Point) -> int:
        return self.labels[self.domain.position(x)]

    def label_at(self, position: int) -> int:
        return self.labels[position]

    def pattern(self) -> str:
        return "".join("+" if v > 0 else "-" for v in self.labels)

    def __repr__(self):
        return f"Hypothesis({self.pattern()})"


class ConceptClass:
    """A finite set of hypotheses over a shared domain, in a fixed order."""

    def __init__(self, domain: Domain, hypotheses: Sequence[Hypothesis], name: str = ""):
        seen = set()
        bound = []
        for i, h in enumerate(hypotheses):
            if h.domain != domain:
                raise ValueError("concepts: hypothesis domain mismatch")
            if h.labels in seen:
                raise ValueError(f"concepts: duplicate hypothesis {h.pattern()}")
            seen.add(h.labels)
            bound.append(Hypothesis(domain, h.labels, index=i))
        self.domain = domain
        self.hypotheses = tuple(bound)
        self.name = name

    @classmethod
    def from_labels(cls, points: Sequence[Point], rows: Iterable[Sequence[int]],
                    name: str = "", order: str = "given") -> "ConceptClass":
        domain = Domain(tuple(points))
        hyps = [Hypothesis(domain, tuple(int(v) for v in row)) for row in rows]
        if order == "lex":
            hyps.sort(key=lambda h: h.labels)
        elif order != "given":
            raise ValueError("concepts: order must be 'given' or 'lex'")
        return cls(domain, hyps, name=name)

    def __len__(self) -> int:
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    def __getitem__(self, i: int) -> Hypothesis:
        return self.hypotheses[i]

    def index_of(self, h: Hypothesis) -> int:
        if not hasattr(self, "_lookup"):
            self._lookup = {hh.labels: hh.index for hh in self.hypotheses}
        idx = self._lookup.get(h.labels)
        if idx is None:
            raise KeyError(f"hypothesis {h.pattern()} not in class {self.name!r}")
        return idx

    def __contains__(self, h: Hypothesis) -> bool:
        try:
            self.index_of(h)
        except KeyError:
            return False
        return True

    def label_matrix(self) -> np.ndarray:
        """(|C|, d) int8 matrix of labels, row order = canonical order."""
        if not hasattr(self, "_matrix"):
            self._matrix = np.array([h.labels for h in self.hypotheses], dtype=np.int8)
        return self._matrix

    def __repr__(self):
        return f"ConceptClass({self.name or 'anonymous'}, |H|={len(self)}, d={self.domain.size})"


def make_cube(d: int, cap: int = MAX_CUBE_DIM) -> ConceptClass:
    """All 2**d labelings of the d-point domain {1, ..., d}."""
    if d < 1:
        raise ValueError("concepts: make_cube requires d >= 1")
    if d > cap:
        raise CapExceededError(f"concepts: make_cube d={d} exceeds cap {cap}")
    points = tuple(range(1, d + 1))
    rows = itertools.product((-1, 1), repeat=d)  # ascending == lexicographic
    return ConceptClass.from_labels(points, rows, name=f"cube:{d}")


def make_thresholds(t: int) -> ConceptClass:
    """Thresholds tau_1..tau_t on {1, ..., t-1}; tau_i(x) = + iff x >= i."""
    if t < 2:
        raise ValueError("concepts: make_thresholds requires t >= 2")
    points = tuple(range(1, t))
    rows = [[1 if x >= i else -1 for x in points] for i in range(1, t + 1)]
    return ConceptClass.from_labels(points, rows, name=f"thresholds:{t}")


def make_singletons(s: int) -> ConceptClass:
    """s hypotheses on s points; hypothesis i is + exactly at point i."""
    if s < 2:
        raise ValueError("concepts: make_singletons requires s >= 2")
    points = tuple(range(1, s + 1))
    rows = [[1 if x == i else -1 for x in points] for i in range(1, s + 1)]
    return ConceptClass.from_labels(points, rows, name=f"singletons:{s}")


def _check_domain_cap(c: ConceptClass, op: str, max_domain: int):
    if c.domain.size > max_domain:
        raise CapExceededError(
            f"concepts: {op} domain size {c.domain.size} exceeds cap {max_domain}")


def vc_dimension(c: ConceptClass, *, max_subset: int = MAX_SHATTER_SUBSET,
                 max_domain: int = MAX_DOMAIN) -> int:
    """Largest k such that some k-subset of the domain is shattered.

    Shattering is downward closed, so the search stops at the first size
    with no shattered subset.  If every size up to the cap is shattered and
    larger subsets exist, the answer is not determined and a size error
    carrying the certified lower bound is raised.
    """
    _check_domain_cap(c, "vc_dimension", max_domain)
    if len(c) <= 1:
        return 0
    m = c.label_matrix()
    d = c.domain.size
    best = 0
    for k in range(1, min(d, max_subset) + 1):
        found = False
        full = 1 << k
        for subset in itertools.combinations(range(d), k):
            patterns = {tuple(row) for row in m[:, subset].tolist()}
            if len(patterns) == full:
                found = True
                break
        if not found:
            return best
        best = k
    if best == d:
        return best
    raise CapExceededError(
        f"concepts: vc_dimension subset cap {max_subset} reached with "
        f"a shattered set of size {best}", best_lower_bound=best)


def littlestone_dimension(c: ConceptClass, *, max_domain: int = MAX_DOMAIN,
                          max_class: int = MAX_LDIM_CLASS,
                          max_states: int = MAX_LDIM_STATES) -> int:
    """Mistake-tree depth via the standard recursion.

    Ldim(C) = max over points x splitting C into two nonempty label classes
    of 1 + min(Ldim(C | h(x)=+), Ldim(C | h(x)=-)); Ldim = 0 for |C| <= 1.
    """
    _check_domain_cap(c, "littlestone_dimension", max_domain)
    if len(c) > max_class:
        raise CapExceededError(
            f"concepts: littlestone_dimension class size {len(c)} exceeds cap {max_class}")
    m = c.label_matrix()
    d = c.domain.size
    memo: dict[frozenset, int] = {}

    def rec(indices: frozenset) -> int:
        if len(indices) <= 1:
            return 0
        got = memo.get(indices)
        if got is not None:
            return got
        if len(memo) > max_states:
            raise CapExceededError(
                f"concepts: littlestone_dimension state budget {max_states} exceeded")
        idx = np.fromiter(indices, dtype=np.int64)
        best = 0
        for x in range(d):
            col = m[idx, x]
            plus = idx[col > 0]
            minus = idx[col < 0]
            if plus.size == 0 or minus.size == 0:
                continue
            val = 1 + min(rec(frozenset(plus.tolist())), rec(frozenset(minus.tolist())))
            if val > best:
                best = val
        memo[indices] = best
        return best

    return rec(frozenset(range(len(c))))


def hollow_star_number(c: ConceptClass, cap: int = 10, *,
                       max_domain: int = MAX_DOMAIN) -> int:
    """Largest s <= cap with an s-subset whose projection misses a pattern
    while containing all of its Hamming-distance-1 neighbors; 0 if none."""
    if cap > MAX_HOLLOW_CAP:
        raise CapExceededError(
            f"concepts: hollow_star_number cap {cap} exceeds hard cap {MAX_HOLLOW_CAP}")
    _check_domain_cap(c, "hollow_star_number", max_domain)
    m = c.label_matrix()
    d = c.domain.size
    for s in range(min(cap, d), 0, -1):
        for subset in itertools.combinations(range(d), s):
            if find_hollow_star_pattern(m[:, subset]) is not None:
                return s
    return 0


def find_hollow_star_pattern(proj: np.ndarray):
    """A missing (+1/-1) pattern with all 1-flip neighbors present, or None."""
    s = proj.shape[1]
    present = {tuple(row) for row in proj.tolist()}
    for bits in itertools.product((-1, 1), repeat=s):
        if bits in present:
            continue
        if all(bits[:j] + (-bits[j],) + bits[j + 1:] in present for j in range(s)):
            return bits
    return None


def find_hollow_star(c: ConceptClass, size: int):
    """Point identifiers of a hollow star of exactly ``size``, or None."""
    m = c.label_matrix()
    d = c.domain.size
    if size > d:
        return None
    for subset in itertools.combinations(range(d), size):
        if find_hollow_star_pattern(m[:, subset]) is not None:
            return tuple(c.domain.points[i] for i in subset)
    return None


def save_class(c: ConceptClass, path: str) -> None:
    payload = {"domain": list(c.domain.points),
               "hypotheses": [list(h.labels) for h in c.hypotheses]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_class(path: str, name: str = "") -> ConceptClass:
    """Load ``{"domain": [...], "hypotheses": [[±1, ...], ...]}``.

    Rejects duplicate rows, wrong-length rows, and non-±1 entries.
    """
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    points = payload["domain"]
    d = len(points)
    rows = payload["hypotheses"]
    for row in rows:
        if len(row) != d:
            raise ValueError(
                f"concepts: class file row {row} has length {len(row)}, expected {d}")
    return ConceptClass.from_labels(points, rows, name=name or path)
