"""Concept class construction and brute-force dimensions."""

import itertools
import json

import pytest

from stability_lab import concepts
from stability_lab.concepts import (ConceptClass, Domain, Hypothesis,
                                    hollow_star_number, littlestone_dimension,
                                    load_class, make_cube, make_singletons,
                                    make_thresholds, save_class, vc_dimension)
from stability_lab.errors import CapExceededError


def test_make_cube_small():
    c1 = make_cube(1)
    assert {h.pattern() for h in c1} == {"+", "-"}
    c2 = make_cube(2)
    assert len(c2) == 4
    c3 = make_cube(3)
    assert len(c3) == 8
    assert vc_dimension(c3) == 3


def test_cube_lexicographic_order():
    c = make_cube(2)
    assert [h.pattern() for h in c] == ["--", "-+", "+-", "++"]
    for i, h in enumerate(c):
        assert h.index == i


def test_cube_cap():
    with pytest.raises(CapExceededError):
        make_cube(17)
    with pytest.raises(ValueError):
        make_cube(0)


def test_thresholds_patterns():
    c = make_thresholds(3)
    assert [h.pattern() for h in c] == ["++", "-+", "--"]
    c2 = make_thresholds(2)
    assert c2.domain.points == (1,)
    assert {h.pattern() for h in c2} == {"+", "-"}
    with pytest.raises(ValueError):
        make_thresholds(1)


def test_singletons():
    c = make_singletons(3)
    assert len(c) == 3
    for i, h in enumerate(c):
        assert sum(1 for v in h.labels if v > 0) == 1
        assert h(i + 1) == 1
    assert all(h.pattern() != "---" for h in c)
    with pytest.raises(ValueError):
        make_singletons(1)


def test_vc_examples():
    assert vc_dimension(make_thresholds(5)) == 1
    # independent check for singletons: no pair realizes (+, +)
    c = make_singletons(3)
    for a, b in itertools.combinations(range(3), 2):
        assert not any(h.labels[a] > 0 and h.labels[b] > 0 for h in c)
    assert vc_dimension(c) == 1


def test_littlestone_examples():
    single = ConceptClass.from_labels((1, 2), [[1, -1]])
    assert littlestone_dimension(single) == 0
    assert littlestone_dimension(make_cube(2)) == 2
    assert littlestone_dimension(make_thresholds(5)) == 2


def test_hollow_star_examples():
    assert hollow_star_number(make_singletons(4)) == 4
    assert hollow_star_number(make_cube(2)) == 0
    assert hollow_star_number(make_thresholds(5)) == 2
    with pytest.raises(CapExceededError):
        hollow_star_number(make_cube(2), cap=21)


@pytest.mark.parametrize("d", range(1, 7))
def test_cube_dims_match(d):
    c = make_cube(d)
    assert vc_dimension(c) == d
    assert littlestone_dimension(c) == d


@pytest.mark.parametrize("t", [2, 3, 5, 9, 17])
def test_threshold_vc_is_one(t):
    assert vc_dimension(make_thresholds(t)) == 1


def test_ldim_at_least_vc_on_builtins():
    classes = [make_cube(3), make_thresholds(6), make_singletons(5)]
    for c in classes:
        assert littlestone_dimension(c) >= vc_dimension(c)


@pytest.mark.parametrize("s", range(2, 7))
def test_hollow_star_of_singletons(s):
    assert hollow_star_number(make_singletons(s), cap=s) == s


def test_construction_deterministic():
    a = make_cube(3)
    b = make_cube(3)
    assert [h.labels for h in a] == [h.labels for h in b]
    assert [h.labels for h in make_thresholds(6)] == [h.labels for h in make_thresholds(6)]


def test_vc_cap_carries_lower_bound():
    with pytest.raises(CapExceededError) as exc:
        vc_dimension(make_cube(4), max_subset=2)
    assert exc.value.best_lower_bound == 2


def test_domain_cap():
    big = ConceptClass.from_labels(tuple(range(21)), [[1] * 21])
    with pytest.raises(CapExceededError):
        vc_dimension(big)
    with pytest.raises(CapExceededError):
        littlestone_dimension(big)


def test_duplicate_hypotheses_rejected():
    with pytest.raises(ValueError):
        ConceptClass.from_labels((1, 2), [[1, 1], [1, 1]])


def test_hypothesis_equality_ignores_binding():
    d = Domain((1, 2))
    a = Hypothesis(d, (1, -1))
    b = Hypothesis(d, (1, -1), index=3)
    assert a == b
    assert hash(a) == hash(b)


def test_class_json_round_trip(tmp_path):
    c = make_thresholds(4)
    path = tmp_path / "class.json"
    save_class(c, str(path))
    c2 = load_class(str(path))
    assert [h.labels for h in c2] == [h.labels for h in c]
    assert c2.domain.points == c.domain.points


def test_class_loader_rejects_bad_rows(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"domain": ["a", "b"], "hypotheses": [[1, -1, 1]]}))
    with pytest.raises(ValueError):
        load_class(str(path))
    path.write_text(json.dumps({"domain": ["a", "b"],
                                "hypotheses": [[1, -1], [1, -1]]}))
    with pytest.raises(ValueError):
        load_class(str(path))
    path.write_text(json.dumps({"domain": ["a", "b"], "hypotheses": [[1, 2]]}))
    with pytest.raises(ValueError):
        load_class(str(path))


def test_hollow_star_finder():
    star = concepts.find_hollow_star(make_singletons(4), 4)
    assert star == (1, 2, 3, 4)
    assert concepts.find_hollow_star(make_cube(2), 2) is None
