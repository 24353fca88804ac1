import math

import numpy as np
import pytest

import oracles
from ogpm.core import L1, L2, Interval, expected_error, merge_pieces
from ogpm.mechanisms import ogpm_circular, ogpm_params, ogpm_unbiased_params
from ogpm.analytics import worst_case_error
from ogpm.mechanisms import REGISTRY
from ogpm.solver import (
    AtPoint,
    SolverProblem,
    _same_structure,
    fit_closed_form,
    solve_intervals,
    solve_probabilities,
    verify_optimal_m,
)

UNIT = Interval.unit()
CIRCLE = Interval.circle()


class TestProblem:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverProblem(UNIT, L1, 0, 1.0)
        with pytest.raises(ValueError):
            SolverProblem(UNIT, L1, 3, -1.0)
        with pytest.raises(ValueError):
            SolverProblem(UNIT, L1, 3, 1.0, AtPoint(2.0))
        with pytest.raises(ValueError):
            SolverProblem(UNIT, L2, 3, 1.0, unbiased=True)
        with pytest.raises(ValueError):
            SolverProblem(UNIT, L2, 3, 1.0, output_domain=Interval(-1, 2))

    def test_solve_point(self):
        assert SolverProblem(UNIT, L1, 3, 1.0).solve_point() == 0.0
        assert SolverProblem(CIRCLE, L1, 3, 1.0).solve_point() == math.pi


class TestSolveProbabilities:
    @pytest.mark.parametrize("eps", [0.5, 1, 2, 4, 8])
    def test_l1_recovers_closed_form(self, eps):
        sol = solve_probabilities(SolverProblem(UNIT, L1, 3, eps))
        assert sol.converged
        assert sol.objective == pytest.approx(worst_case_error(REGISTRY["ogpm"], eps, L1), abs=1e-7)
        assert sol.pdf.densities.max() == pytest.approx(math.exp(eps / 2), rel=1e-5)

    @pytest.mark.parametrize("eps", [0.5, 1, 2, 4])
    def test_l2_matches_brute_force(self, eps):
        sol = solve_probabilities(SolverProblem(UNIT, L2, 3, eps))
        ref, p = oracles.unit_worst_l_p(eps, 2)
        assert sol.objective == pytest.approx(ref, abs=1e-6)
        assert sol.pdf.densities.max() == pytest.approx(p, rel=1e-3)

    def test_l2_beats_half_exponent_design(self):
        # the squared-error optimum is not the exp(eps/2) design
        sol = solve_probabilities(SolverProblem(UNIT, L2, 3, 1.0))
        assert sol.objective < worst_case_error(REGISTRY["ogpm"], 1.0, L2) - 1e-3
        assert abs(sol.pdf.densities.max() - math.exp(0.5)) > 0.1

    def test_m1_is_uniform(self):
        sol = solve_probabilities(SolverProblem(UNIT, L1, 1, 2.0))
        assert sol.objective == pytest.approx(0.5)
        assert len(sol.levels) == 1

    def test_more_pieces_never_hurt(self):
        objs = [solve_probabilities(SolverProblem(UNIT, L1, m, 1.5)).objective for m in (1, 2, 3, 4)]
        assert all(b <= a + 1e-9 for a, b in zip(objs, objs[1:]))

    def test_circle(self):
        sol = solve_probabilities(SolverProblem(CIRCLE, L1, 3, 1.0))
        assert sol.objective == pytest.approx(expected_error(ogpm_circular(1.0, math.pi), L1, math.pi),
                                              abs=1e-7)

    def test_solution_is_private(self):
        sol = solve_probabilities(SolverProblem(UNIT, L2, 4, 3.0))
        assert sol.pdf.ratio() <= math.exp(3.0) * (1 + 1e-9)
        assert float(sol.pdf.densities @ sol.pdf.widths) == pytest.approx(1, abs=1e-12)

    def test_point_target(self):
        sol = solve_probabilities(SolverProblem(UNIT, L1, 3, 1.0, AtPoint(0.2)))
        assert sol.objective == pytest.approx(0.24137, abs=1e-4)

    def test_unbiased_beats_closed_form(self):
        eps = 2.0
        c = ogpm_unbiased_params(eps)[2]
        prob = SolverProblem(UNIT, L2, 3, eps, unbiased=True, output_domain=Interval(-c, c + 1))
        sol = solve_probabilities(prob)
        assert sol.pdf.mean() == pytest.approx(0.0, abs=1e-8)
        closed = worst_case_error(REGISTRY["ogpm-u"], eps, L2)
        assert sol.objective < closed - 0.05


class TestSolveIntervals:
    def test_reproduces_three_piece(self):
        eps = 1.0
        p, q, c = ogpm_params(eps)
        prob = SolverProblem(UNIT, L1, 3, eps)
        for x in (0.05, 0.5, 0.97):
            sol = solve_intervals(prob, (p, q), x)
            m = merge_pieces(sol.pdf)
            ref = REGISTRY["ogpm"].pdf(eps, x)
            assert np.allclose(m.densities, ref.densities, atol=1e-6)
            assert np.allclose(m.edges, ref.edges, atol=1e-5)

    def test_circle_wrap(self):
        eps = 1.0
        p = math.exp(eps / 2) / (2 * math.pi)
        sol = solve_intervals(SolverProblem(CIRCLE, L1, 3, eps), (p, p / math.e), 0.3)
        assert _same_structure(merge_pieces(sol.pdf), merge_pieces(ogpm_circular(eps, 0.3)))

    def test_rejects_bad_levels(self):
        prob = SolverProblem(UNIT, L1, 3, 1.0)
        with pytest.raises(ValueError):
            solve_intervals(prob, (3.0, 0.5), 0.2)
        with pytest.raises(ValueError):
            solve_intervals(prob, (1.0, -0.5), 0.2)
        with pytest.raises(ValueError):
            solve_intervals(prob, (1.2, 0.8), 1.5)


class TestVerify:
    def test_three_pieces_suffice(self):
        rep = verify_optimal_m(UNIT, L1, 3, 4, seed=1)
        assert rep.all_equal and rep.summary().startswith("PASS")

    def test_one_piece_is_not_enough(self):
        rep = verify_optimal_m(UNIT, L1, 1, 3, eps_range=(1, 5), seed=2)
        assert not rep.all_equal and rep.summary().startswith("FAIL")

    def test_progress(self):
        seen = []
        verify_optimal_m(UNIT, L2, 3, 2, progress=seen.append)
        assert seen == [1, 2]


class TestFit:
    def test_exp_half(self):
        e = np.linspace(0.1, 8, 30)
        r = fit_closed_form(list(zip(e, np.exp(e / 2))))
        assert r.success and r.beta[0] == pytest.approx(0.5, abs=1e-8)
        assert r.max_residual < 1e-8

    def test_affine_and_power(self):
        e = np.linspace(0.5, 4, 20)
        assert fit_closed_form(list(zip(e, 3 * e - 1)), "affine").beta == pytest.approx((3, -1))
        assert fit_closed_form(list(zip(e, 2 * e ** 1.5)), "power-law").beta == pytest.approx(
            (2, 1.5), rel=1e-6)

    def test_degenerate(self):
        r = fit_closed_form([(1.0, 2.0)] * 5, "affine")
        assert not r.success

    def test_bad_input(self):
        with pytest.raises(ValueError):
            fit_closed_form([(1, 2), (2, 3)])
        with pytest.raises(ValueError):
            fit_closed_form([(1, 2)] * 4, "spline")
