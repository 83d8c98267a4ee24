"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Run with `pytest -s tests/test_acceptance.py` to see the lines live. The two
trend criteria share one experiment grid (T-learner, perfect/none/entangled,
n in {300, 3000}, five seeds, full training recipe), so the grid is computed
once in a module fixture.
"""

import math
import os
import time

import numpy as np
import pytest

from cateforge import datagen as dg
from cateforge import evaluation as ev
from cateforge import metalearners as ml
from cateforge import neuralcore as nc
from cateforge.nuisance import NuisanceEstimates, Provenance


def announce(criterion: str, passed: bool, detail: str) -> None:
    print(f"[{criterion}] {'PASS' if passed else 'FAIL'} - {detail}", flush=True)


def true_quantities(spec):
    """Closed-form (pi, mu0, mu1, tau) for all 32 patterns, straight from
    the generating parameters."""
    patterns = dg.all_symptom_patterns()
    w_pi = spec.propensity.weight_vector()
    w0 = spec.outcome_control.weight_vector()
    w1 = spec.outcome_treated.weight_vector()
    pi = 1.0 / (1.0 + np.exp(-(spec.propensity.intercept + patterns @ w_pi)))
    mu0 = np.exp(spec.outcome_control.intercept + patterns @ w0)
    mu1 = np.exp(spec.outcome_treated.intercept + patterns @ w1)
    return patterns, pi, mu0, mu1, mu1 - mu0


def eta_for(mu0, mu1, mu, pi):
    return NuisanceEstimates(
        mu0_hat=np.asarray([mu0], dtype=float),
        mu1_hat=np.asarray([mu1], dtype=float),
        mu_hat=np.asarray([mu], dtype=float),
        pi_hat=np.asarray([pi], dtype=float),
        provenance=Provenance(0),
    )


def finite_sum(pseudo_fn, eta_fn, pi, mu0, mu1):
    """Sum over arms of P(t|x) * pseudo(t, y = E[Y|t,x]); the pseudo-outcomes
    are affine in y so this equals the expectation over the Poisson outcome."""
    values = np.zeros(len(pi))
    for i in range(len(pi)):
        ev_i = 0.0
        for arm, prob, mean in ((1.0, pi[i], mu1[i]), (0.0, 1.0 - pi[i], mu0[i])):
            out = pseudo_fn(np.array([arm]), np.array([mean]), eta_fn(i, arm))
            ev_i += prob * float(out.tau_tilde[0])
        values[i] = ev_i
    return values


class TestCriterion1UnbiasednessOracle:
    def test_ra_and_dr_unbiased_with_true_nuisances(self, default_spec):
        start = time.perf_counter()
        _, pi, mu0, mu1, tau = true_quantities(default_spec)
        mu = pi * mu1 + (1.0 - pi) * mu0

        def true_eta(i, _arm):
            return eta_for(mu0[i], mu1[i], mu[i], pi[i])

        err_ra = np.max(np.abs(finite_sum(ml.pseudo_ra, true_eta, pi, mu0, mu1) - tau))
        err_dr = np.max(np.abs(finite_sum(ml.pseudo_dr, true_eta, pi, mu0, mu1) - tau))
        elapsed = time.perf_counter() - start
        ok = err_ra <= 1e-10 and err_dr <= 1e-10 and elapsed < 1.0
        announce(
            "criterion 1",
            ok,
            f"RA err {err_ra:.2e}, DR err {err_dr:.2e} over 32 patterns in {elapsed:.3f}s",
        )
        assert err_ra <= 1e-10
        assert err_dr <= 1e-10
        assert elapsed < 1.0


class TestCriterion2DoubleRobustness:
    def test_dr_with_offset_outcomes_and_wrong_propensities(self, default_spec):
        start = time.perf_counter()
        _, pi, mu0, mu1, tau = true_quantities(default_spec)

        def offset_eta(i, _arm):
            return eta_for(mu0[i] - 1.3, mu1[i] + 0.7, 0.0, pi[i])

        err_a = np.max(np.abs(finite_sum(ml.pseudo_dr, offset_eta, pi, mu0, mu1) - tau))

        err_b = 0.0
        for fixed in (0.1, 0.3, 0.7, 0.9):

            def wrong_pi_eta(i, _arm, fixed=fixed):
                return eta_for(mu0[i], mu1[i], 0.0, fixed)

            err = np.max(np.abs(finite_sum(ml.pseudo_dr, wrong_pi_eta, pi, mu0, mu1) - tau))
            err_b = max(err_b, err)
        elapsed = time.perf_counter() - start
        ok = err_a <= 1e-10 and err_b <= 1e-10 and elapsed < 1.0
        announce(
            "criterion 2",
            ok,
            f"outcome-offset err {err_a:.2e}, wrong-propensity err {err_b:.2e} in {elapsed:.3f}s",
        )
        assert err_a <= 1e-10
        assert err_b <= 1e-10
        assert elapsed < 1.0


class TestCriterion3RLearnerIdentity:
    def test_weighted_ratio_recovers_cate(self, default_spec):
        start = time.perf_counter()
        _, pi, mu0, mu1, tau = true_quantities(default_spec)
        mu = pi * mu1 + (1.0 - pi) * mu0
        worst = 0.0
        for i in range(32):
            num = 0.0
            den = 0.0
            for arm, prob, mean in ((1.0, pi[i], mu1[i]), (0.0, 1.0 - pi[i], mu0[i])):
                out = ml.pseudo_r(
                    np.array([arm]), np.array([mean]), eta_for(mu0[i], mu1[i], mu[i], pi[i])
                )
                num += prob * float(out.weights[0] * out.tau_tilde[0])
                den += prob * float(out.weights[0])
            worst = max(worst, abs(num / den - tau[i]))
        elapsed = time.perf_counter() - start
        ok = worst <= 1e-10 and elapsed < 1.0
        announce("criterion 3", ok, f"worst ratio error {worst:.2e} in {elapsed:.3f}s")
        assert worst <= 1e-10
        assert elapsed < 1.0


class TestCriterion4GradientCorrectness:
    def test_all_losses_match_central_differences(self):
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        worst = 0.0
        step = 1e-5
        for model_idx in range(5):
            for kind in (nc.LOSS_MSE, nc.LOSS_BCE, nc.LOSS_WEIGHTED_MSE):
                output = nc.SIGMOID if kind == nc.LOSS_BCE else nc.IDENTITY
                model = nc.init_mlp(5, 10, output, rng)
                X = rng.normal(size=(8, 5))
                y = (
                    (rng.uniform(size=8) > 0.5).astype(float)
                    if kind == nc.LOSS_BCE
                    else rng.normal(size=8)
                )
                weights = (
                    rng.uniform(0.05, 2.0, size=8) if kind == nc.LOSS_WEIGHTED_MSE else None
                )
                wd = 1e-4

                def objective():
                    return nc.data_loss(model, X, y, kind, weights) + 0.5 * wd * (
                        float(np.sum(model.w1**2)) + float(np.sum(model.w2**2))
                    )

                _, grads = nc.backward(model, X, y, kind, weights, wd)
                for param, grad in zip(model.params(), grads):
                    flat = param.ravel()
                    gflat = grad.ravel()
                    for idx in range(flat.size):
                        original = flat[idx]
                        flat[idx] = original + step
                        up = objective()
                        flat[idx] = original - step
                        down = objective()
                        flat[idx] = original
                        fd = (up - down) / (2.0 * step)
                        denom = max(abs(fd), abs(gflat[idx]), 1e-8)
                        worst = max(worst, abs(fd - gflat[idx]) / denom)
        elapsed = time.perf_counter() - start
        ok = worst <= 1e-5 and elapsed < 5.0
        announce(
            "criterion 4",
            ok,
            f"worst relative gradient error {worst:.2e} over 5 models x 3 losses in {elapsed:.2f}s",
        )
        assert worst <= 1e-5
        assert elapsed < 5.0


class TestCriterion5PeheUnits:
    def test_unit_values(self):
        exact_zero = ev.pehe(np.array([1.0, -2.0, 0.5]), np.array([1.0, -2.0, 0.5]))
        offset = ev.pehe(np.array([3.0, -1.0, 2.5]), np.array([1.0, -3.0, 0.5]))
        root = ev.pehe(np.array([1.0, 3.0]), np.array([0.0, 1.0]))
        ok = (
            exact_zero == 0.0
            and offset == 2.0
            and abs(root - math.sqrt(2.5)) <= 1e-12
        )
        announce(
            "criterion 5",
            ok,
            f"identical -> {exact_zero}, +2 offset -> {offset}, sqrt(2.5) err {abs(root - math.sqrt(2.5)):.2e}",
        )
        assert exact_zero == 0.0
        assert offset == 2.0
        assert abs(root - math.sqrt(2.5)) <= 1e-12


@pytest.fixture(scope="module")
def trend_grid(default_spec):
    """Shared grid for criteria 6 and 7: full Appendix-style recipe."""
    plan = ev.ExperimentPlan(
        generator=default_spec,
        train_sizes=(300, 3000),
        test_size=1000,
        seeds=(1, 2, 3, 4, 5),
        settings=("perfect", "none", "entangled"),
        learners=("T",),
    )
    workers = max(1, min(4, os.cpu_count() or 1))
    start = time.perf_counter()
    result = ev.run_plan(plan, workers=workers)
    elapsed = time.perf_counter() - start
    assert result.ok, f"failed cells: {result.failures}"
    return result.records, elapsed


class TestCriterion6GapWidensWithData:
    def test_perfect_vs_none_gap(self, trend_grid):
        records, elapsed = trend_grid
        med = lambda s, n: ev.median_pehe(records, "T", s, n)
        perfect_3000, none_3000 = med("perfect", 3000), med("none", 3000)
        gap_300 = med("none", 300) - med("perfect", 300)
        gap_3000 = none_3000 - perfect_3000
        ok = perfect_3000 < none_3000 and gap_3000 > gap_300 and elapsed < 600.0
        announce(
            "criterion 6",
            ok,
            f"median perfect(3000)={perfect_3000:.3f} < none(3000)={none_3000:.3f}; "
            f"gap {gap_300:+.3f} -> {gap_3000:+.3f}; grid wall {elapsed:.0f}s",
        )
        assert perfect_3000 < none_3000
        assert gap_3000 > gap_300
        assert elapsed < 600.0


class TestCriterion7EmbeddingOrdering:
    def test_entangled_falls_between(self, trend_grid):
        records, elapsed = trend_grid
        med = lambda s, n: ev.median_pehe(records, "T", s, n)
        p3, e3, z3 = med("perfect", 3000), med("entangled", 3000), med("none", 3000)
        e0, z0 = med("entangled", 300), med("none", 300)
        ordered = p3 <= e3 <= z3 * 1.02
        never_worse = e0 <= z0 * 1.05
        ok = ordered and never_worse and elapsed < 900.0
        announce(
            "criterion 7",
            ok,
            f"n=3000: {p3:.3f} <= {e3:.3f} <= {z3:.3f}*1.02; "
            f"n=300: {e0:.3f} <= {z0:.3f}*1.05; grid wall {elapsed:.0f}s",
        )
        assert ordered
        assert never_worse
        assert elapsed < 900.0


class TestCriterion8Determinism:
    def test_run_cell_reproduces_pehe(self, default_spec):
        plan = ev.ExperimentPlan(
            generator=default_spec,
            train_sizes=(300,),
            test_size=1000,
            seeds=(1,),
            settings=("perfect",),
            learners=("T",),
        )
        cell = ev.Cell("T", "perfect", 300, 1)
        first = ev.run_cell(plan, cell)
        second = ev.run_cell(plan, cell)
        diff = abs(first.pehe - second.pehe)
        ok = diff <= 1e-12
        announce(
            "criterion 8",
            ok,
            f"|pehe - pehe'| = {diff:.2e} (pehe={first.pehe:.6f})",
        )
        assert diff <= 1e-12
