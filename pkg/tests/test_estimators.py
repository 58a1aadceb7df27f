"""Monte Carlo estimators, the exact oracle, and backend agreement."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stability_lab import kernels, rng
from stability_lab.concepts import Domain, Hypothesis, make_cube, make_thresholds
from stability_lab.distributions import FiniteDistribution, LabeledExample
from stability_lab.errors import CapExceededError
from stability_lab.estimators import (OutputHistogram,
                                      exact_output_distribution,
                                      hoeffding_half_width, list_coverage,
                                      output_histogram, run_trials,
                                      shared_randomness_replicability,
                                      stability_report)
from stability_lab.learners import (all_plus, cube_learner, empiricalize,
                                    erm_learner, first_example_learner)

LE = LabeledExample


def two_atom():
    return FiniteDistribution([(LE(1, 1), 0.6), (LE(2, -1), 0.4)])


def constant_learner(domain):
    return first_example_learner({}, all_plus(domain), name="constant")


def test_constant_learner_single_bin():
    d = FiniteDistribution([(LE(1, 1), 1.0)])
    hist = output_histogram(constant_learner(Domain((1,))), d, 1, 100, seed=5)
    assert list(hist.counts.values()) == [100]


def test_histogram_deterministic():
    a = erm_learner(make_cube(2))
    h1 = output_histogram(a, two_atom(), 4, 300, seed=9)
    h2 = output_histogram(a, two_atom(), 4, 300, seed=9)
    assert h1.counts == h2.counts


@pytest.mark.parametrize("force_sequential", [False, True])
def test_histogram_merge_matches_single_run(force_sequential):
    a = erm_learner(make_cube(2))
    d = two_atom()
    full = run_trials(a, d, 3, 200, seed=4,
                      force_sequential=force_sequential).histogram()
    left = run_trials(a, d, 3, 80, seed=4,
                      force_sequential=force_sequential).histogram()
    right = run_trials(a, d, 3, 120, seed=4, trial_start=80,
                       force_sequential=force_sequential).histogram()
    merged = left.merge(right)
    assert merged.counts == full.counts
    assert merged.trials == full.trials
    with pytest.raises(ValueError):
        left.merge(left)


def test_thread_count_does_not_change_histogram():
    a = erm_learner(make_cube(2))
    d = two_atom()
    h1 = output_histogram(a, d, 3, 2000, seed=6, threads=1)
    h4 = output_histogram(a, d, 3, 2000, seed=6, threads=4)
    assert h1.counts == h4.counts


def test_sequential_matches_batch_on_all_backends():
    learners = [
        erm_learner(make_cube(2)),
        cube_learner(2, 0.4),
        empiricalize(erm_learner(make_cube(2)), make_cube(2), 0.1, 0.1),
    ]
    d = FiniteDistribution([(LE(1, -1), 0.85), (LE(2, -1), 0.15)])
    for a in learners:
        ref = run_trials(a, d, 6, 500, seed=13, force_sequential=True)
        ref_counts = ref.histogram().counts
        for backend in kernels.available_backends():
            kernels.set_backend(backend)
            got = run_trials(a, d, 6, 500, seed=13)
            assert got.histogram().counts == ref_counts, (a.name, backend)
            assert (got.mistakes == ref.mistakes).all(), (a.name, backend)


def test_stability_report_arithmetic():
    h = Hypothesis(Domain((1,)), (1,))
    g = Hypothesis(Domain((1,)), (-1,))
    hist = OutputHistogram(counts={h: 60, g: 40}, trials=100, n=5, seed=0)
    rep = stability_report(hist)
    assert rep.rho_hat == pytest.approx(0.6)
    assert rep.collision_hat == pytest.approx(0.52)
    assert rep.modal == h
    single = OutputHistogram(counts={h: 50}, trials=50, n=5, seed=0)
    rep2 = stability_report(single)
    assert rep2.rho_hat == 1.0 and rep2.collision_hat == 1.0


@given(st.lists(st.integers(1, 500), min_size=1, max_size=8))
@settings(max_examples=200, deadline=None)
def test_sandwich_on_random_histograms(counts):
    dom = Domain(tuple(range(4)))
    hyps = {}
    for i, c in enumerate(counts):
        labels = tuple(1 if (i >> b) & 1 else -1 for b in range(4))
        hyps[Hypothesis(dom, labels)] = c
    hist = OutputHistogram(counts=hyps, trials=sum(counts), n=1, seed=0)
    rep = stability_report(hist)
    assert rep.rho_hat >= rep.collision_hat >= rep.rho_hat ** 2 - 1e-15


def test_report_ci_formula():
    h = Hypothesis(Domain((1,)), (1,))
    hist = OutputHistogram(counts={h: 1000}, trials=1000, n=5, seed=0)
    rep = stability_report(hist)
    assert rep.ci_half_width == pytest.approx(math.sqrt(math.log(200) / 2000))


def test_monte_carlo_matches_oracle():
    a = erm_learner(make_cube(2))
    d = two_atom()
    exact = exact_output_distribution(a, d, 3)
    hist = output_histogram(a, d, 3, 100_000, seed=31)
    sigma = math.sqrt(math.log(2 * 4) / (2 * 100_000))
    for h, p in exact.items():
        assert abs(hist.frequency(h) - p) <= 3 * sigma


def test_shared_randomness_constant_is_one():
    d = FiniteDistribution([(LE(1, 1), 1.0)])
    est = shared_randomness_replicability(constant_learner(Domain((1,))), d, 1, 500, seed=2)
    assert est.value == 1.0


def test_shared_randomness_deterministic_learner_matches_collision():
    a = erm_learner(make_thresholds(4))
    d = FiniteDistribution([(LE(1, -1), 0.4), (LE(2, 1), 0.35), (LE(3, 1), 0.25)])
    est = shared_randomness_replicability(a, d, 10, 20_000, seed=3)
    rep = stability_report(output_histogram(a, d, 10, 20_000, seed=303))
    assert abs(est.value - rep.collision_hat) <= 2 * (est.ci_half_width + rep.ci_half_width)


def test_shared_randomness_cube_gap_nonnegative():
    # with a shared cutoff the agreement rate should not trail the collision rate
    a = cube_learner(2, 0.4)
    d = FiniteDistribution([(LE(1, -1), 0.9), (LE(2, -1), 0.1)])
    est = shared_randomness_replicability(a, d, 20, 50_000, seed=17)
    rep = stability_report(output_histogram(a, d, 20, 50_000, seed=18))
    assert est.value >= rep.collision_hat - 2 * (est.ci_half_width + rep.ci_half_width)


def test_shared_randomness_sequential_matches_batch():
    a = cube_learner(2, 0.4)
    d = FiniteDistribution([(LE(1, -1), 0.8), (LE(2, -1), 0.2)])
    fast = shared_randomness_replicability(a, d, 9, 400, seed=23)
    slow_agree = 0
    from stability_lab.distributions import draw_sample
    for i in range(400):
        r = rng.derive(23, i, rng.ROLE_LEARNER)
        s1 = draw_sample(d, 9, rng.derive(23, i, rng.ROLE_SAMPLE))
        s2 = draw_sample(d, 9, rng.derive(23, i, rng.ROLE_SAMPLE2))
        if a.evaluate(s1, r) == a.evaluate(s2, r):
            slow_agree += 1
    assert fast.value == pytest.approx(slow_agree / 400)


class TestExactOracle:
    def test_constant(self):
        d = two_atom()
        a = constant_learner(Domain((1, 2)))
        exact = exact_output_distribution(a, d, 4)
        assert len(exact) == 1
        assert next(iter(exact.values())) == pytest.approx(1.0)

    def test_single_draw_erm(self):
        p = 0.37
        d = FiniteDistribution([(LE(1, 1), p), (LE(2, -1), 1 - p)])
        a = erm_learner(make_cube(2))
        exact = exact_output_distribution(a, d, 1)
        by_pattern = {h.pattern(): q for h, q in exact.items()}
        assert by_pattern["+-"] == pytest.approx(p)
        assert by_pattern["--"] == pytest.approx(1 - p)

    def test_cube_learner_hand_case(self):
        # n=3, masses (0.9, 0.1): every present point has frequency >= 1/3,
        # far above the cutoff range [0, 0.1], so the cutoff never matters
        a = cube_learner(2, 0.4)
        d = FiniteDistribution([(LE(1, -1), 0.9), (LE(2, -1), 0.1)])
        exact = exact_output_distribution(a, d, 3)
        by_pattern = {h.pattern(): q for h, q in exact.items()}
        assert by_pattern["--"] == pytest.approx(0.27, abs=1e-12)
        assert by_pattern["-+"] == pytest.approx(0.729, abs=1e-12)
        assert by_pattern["+-"] == pytest.approx(0.001, abs=1e-12)

    def test_cube_learner_cutoff_sensitive_case(self):
        # n=13: a point seen once has frequency 1/13 < 0.1, inside the
        # cutoff window, so subinterval weighting kicks in
        a = cube_learner(2, 0.4)
        d = FiniteDistribution([(LE(1, -1), 0.8), (LE(2, -1), 0.2)])
        exact = exact_output_distribution(a, d, 13)
        hist = output_histogram(a, d, 13, 100_000, seed=41)
        sigma = math.sqrt(math.log(2 * len(exact)) / (2 * 100_000))
        for h, p in exact.items():
            assert abs(hist.frequency(h) - p) <= 3 * sigma, h.pattern()

    def test_budget(self):
        a = erm_learner(make_cube(2))
        with pytest.raises(CapExceededError):
            exact_output_distribution(a, two_atom(), 21)

    def test_random_seeded_learner_rejected(self):
        from stability_lab.learners import Learner, EvalOutcome
        dom = Domain((1,))
        h = Hypothesis(dom, (1,))
        a = Learner(name="r", domain=dom,
                    evaluate_flagged=lambda s, r: EvalOutcome(h))
        with pytest.raises(ValueError):
            exact_output_distribution(a, FiniteDistribution([(LE(1, 1), 1.0)]), 2)


class TestListCoverage:
    def make_hist(self):
        dom = Domain((1, 2, 3))
        hs = [Hypothesis(dom, (1, 1, 1)), Hypothesis(dom, (1, -1, 1)),
              Hypothesis(dom, (-1, 1, 1))]
        return hs, OutputHistogram(
            counts={hs[0]: 40, hs[1]: 35, hs[2]: 25}, trials=100, n=1, seed=0)

    def test_full_and_empty(self):
        hs, hist = self.make_hist()
        assert list_coverage(hist, hs) == 1.0
        assert list_coverage(hist, []) == 0.0

    def test_top_two_of_exact_law(self):
        # realize the law (0.4, 0.35, 0.25) exactly with a dispatch learner
        dom = Domain((1, 2, 3))
        hs = [Hypothesis(dom, (1, 1, 1)), Hypothesis(dom, (1, -1, 1)),
              Hypothesis(dom, (-1, 1, 1))]
        a = first_example_learner(
            {LE(1, 1): hs[0], LE(2, 1): hs[1], LE(3, 1): hs[2]}, hs[0])
        d = FiniteDistribution([(LE(1, 1), 0.4), (LE(2, 1), 0.35), (LE(3, 1), 0.25)])
        exact = exact_output_distribution(a, d, 1)
        top2 = [h for h, _ in sorted(exact.items(), key=lambda kv: -kv[1])[:2]]
        weight = sum(exact[h] for h in top2)
        assert weight == pytest.approx(0.75)
        hist = output_histogram(a, d, 1, 40_000, seed=8)
        assert list_coverage(hist, top2) == pytest.approx(0.75, abs=0.02)

    def test_subadditivity_and_disjoint_equality(self):
        hs, hist = self.make_hist()
        l1, l2 = [hs[0]], [hs[1], hs[2]]
        both = list_coverage(hist, l1 + l2)
        assert both == pytest.approx(list_coverage(hist, l1) + list_coverage(hist, l2))
        overlap = list_coverage(hist, [hs[0], hs[1]])
        assert overlap <= list_coverage(hist, [hs[0]]) + list_coverage(hist, [hs[0], hs[1]])


def test_hoeffding_half_width_formula():
    assert hoeffding_half_width(100, 0.05) == pytest.approx(
        math.sqrt(math.log(40) / 200))
