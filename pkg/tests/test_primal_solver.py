import math

import numpy as np
import pytest
from scipy import sparse
from scipy.optimize import linprog

import selfdual as sd
from selfdual.dual_solver import dual_objective, lp_bound, solve_brute, solve_matching
from selfdual.primal_solver import (
    PrimalConfig,
    kernel_cancellation,
    minimize_primal,
    primal_objective,
    recover_involution,
    weak_duality,
)

from conftest import (
    monotone_problem,
    random_involution,
    random_kernel,
    random_problem,
    sincos_problem,
    tent_problem,
)


def primal_lp_oracle(dom, fld):
    """Independent dense LP for min P over anti-symmetric kernels.

    Built directly from the definition (one epigraph variable per index,
    one constraint per affine piece), no reuse of solver code paths.
    """
    n = dom.n
    cji = dom.points @ fld.values.T
    iu, ju = np.triu_indices(n, k=1)
    pos = -np.ones((n, n), dtype=int)
    pos[iu, ju] = np.arange(len(iu))
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for i in range(n):
        for j in range(n):
            rows.append(r), cols.append(i), vals.append(1.0)
            if j < i:
                rows.append(r), cols.append(n + pos[j, i]), vals.append(1.0)
            elif j > i:
                rows.append(r), cols.append(n + pos[i, j]), vals.append(-1.0)
            rhs.append(cji[j, i])
            r += 1
    a = sparse.csr_matrix((vals, (rows, cols)), shape=(r, n + len(iu)))
    c = np.concatenate([np.full(n, dom.cell_measure), np.zeros(len(iu))])
    big = 10 * (1 + max(dom.radius, fld.field_radius)) ** 2
    res = linprog(
        c,
        A_ub=-a,
        b_ub=-np.array(rhs),
        bounds=[(None, None)] * n + [(-big, big)] * len(iu),
        method="highs",
    )
    assert res.status == 0
    return float(res.fun)


class TestPrimalObjective:
    def test_zero_kernel_support_form(self):
        dom, fld = monotone_problem(10)
        kernel = sd.AntiSymmetricKernel.zero(10)
        # all field values are positive, so the right endpoint wins every max
        expect = float(dom.points[-1, 0] * fld.values.sum() * dom.cell_measure)
        assert primal_objective(dom, fld, kernel) == pytest.approx(expect, rel=1e-14)

    def test_sincos_near_pi(self):
        dom, fld = sincos_problem(64)
        sol = minimize_primal(dom, fld)
        assert sol.value == pytest.approx(math.pi, rel=0.02)

    def test_sincos_analytic_kernel_near_pi(self):
        # complementarity along the reflection makes the tabulated analytic
        # kernel essentially optimal already
        dom, fld = sincos_problem(64)
        kernel = sd.make_kernel(dom, lambda x, y: x * np.sin(y) - y * np.sin(x))
        assert primal_objective(dom, fld, kernel) == pytest.approx(math.pi, rel=0.02)

    def test_dominates_every_involution(self):
        rng = np.random.default_rng(20)
        for _ in range(50):
            n = int(rng.integers(2, 12))
            dom, fld = random_problem(rng, n)
            kernel = random_kernel(rng, n)
            s = random_involution(rng, n)
            assert primal_objective(dom, fld, kernel) >= dual_objective(
                dom, fld, s
            ) - 1e-12

    def test_convex_in_kernel(self):
        rng = np.random.default_rng(21)
        dom, fld = random_problem(rng, 9)
        for _ in range(50):
            k1 = random_kernel(rng, 9)
            k2 = random_kernel(rng, 9)
            t = float(rng.uniform())
            mix = sd.AntiSymmetricKernel(
                np.triu(t * k1.matrix + (1 - t) * k2.matrix, 1)
            )
            lhs = primal_objective(dom, fld, mix)
            rhs = t * primal_objective(dom, fld, k1) + (1 - t) * primal_objective(
                dom, fld, k2
            )
            assert lhs <= rhs + 1e-12 * max(1, abs(rhs))


class TestWeakDuality:
    def test_random_pairs_nonnegative_slack(self):
        rng = np.random.default_rng(22)
        for _ in range(200):
            n = int(rng.integers(2, 10))
            dom, fld = random_problem(rng, n, d=int(rng.integers(1, 3)))
            kernel = random_kernel(rng, n)
            s = random_involution(rng, n)
            cert = weak_duality(dom, fld, kernel, s)
            assert (cert.slack >= 0).all()
            assert cert.gap >= 0
            assert cert.cancellation == 0.0
            assert cert.primal_value - cert.dual_value >= -1e-12 * max(
                1, abs(cert.primal_value)
            )

    def test_zero_kernel_identity_slack_formula(self):
        dom, fld = monotone_problem(10)
        kernel = sd.AntiSymmetricKernel.zero(10)
        cert = weak_duality(dom, fld, kernel, sd.Involution.identity(10))
        x = dom.points[:, 0]
        u = fld.values[:, 0]
        expect = ((x[-1] - x) * u).sum() * dom.cell_measure
        assert cert.gap == pytest.approx(expect, rel=1e-12)
        assert cert.gap > 0

    def test_optimal_pair_small_slack(self):
        dom, fld = sincos_problem(64)
        sol = minimize_primal(dom, fld)
        s = solve_matching(dom, fld).sigma
        cert = weak_duality(dom, fld, sol.kernel, s)
        assert cert.gap <= 0.02 * cert.primal_value

    def test_cancellation_bit_exact(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            n = int(rng.integers(2, 16))
            kernel = random_kernel(rng, n, scale=float(rng.uniform(0.1, 100)))
            s = random_involution(rng, n)
            assert kernel_cancellation(kernel, s, float(rng.uniform(0.1, 3))) == 0.0

    def test_rejects_non_involution(self):
        dom, fld = monotone_problem(3)
        kernel = sd.AntiSymmetricKernel.zero(3)
        with pytest.raises(ValueError):
            weak_duality(dom, fld, kernel, sd.Involution(np.array([1, 2, 0])))


class TestMinimizePrimal:
    def test_single_cell(self):
        dom, fld = monotone_problem(1)
        sol = minimize_primal(dom, fld)
        assert sol.iterations == 0
        assert np.all(sol.kernel.matrix == 0.0)
        assert sol.value == pytest.approx(
            float(dom.points[0] @ fld.values[0]) * dom.cell_measure
        )

    def test_monotone_reaches_dual_value(self):
        dom, fld = monotone_problem(16)
        sol = minimize_primal(dom, fld)
        d = solve_brute(dom, fld).value if dom.n <= 12 else solve_matching(dom, fld).value
        assert sol.converged
        assert sol.value == pytest.approx(d, rel=1e-6)
        assert sol.value == pytest.approx(
            float((dom.points**2).sum() * dom.cell_measure), rel=1e-6
        )

    def test_tent_matches_certified_optimum(self):
        # enumeration at small n and the relaxation bound at n = 64 agree on
        # an optimum near 2/3; the identity involution alone gives the
        # closed-form 5/8 - O(1/n^2), so that is a hard lower bound on D
        dom, fld = tent_problem(64)
        sol = minimize_primal(dom, fld)
        match = solve_matching(dom, fld)
        ident = dual_objective(dom, fld, sd.Involution.identity(64))
        assert ident == pytest.approx(0.625, abs=2.0 / 64**2)
        assert match.value >= ident - 1e-12
        assert sol.value == pytest.approx(match.value, rel=0.02)
        assert sol.converged

    def test_best_iterate_bounded_by_zero_start(self):
        rng = np.random.default_rng(24)
        dom, fld = random_problem(rng, 14)
        zero_val = primal_objective(dom, fld, sd.AntiSymmetricKernel.zero(14))
        sol = minimize_primal(dom, fld)
        assert sol.value <= zero_val + 1e-12
        assert sol.lower_bound is not None
        assert sol.value >= sol.lower_bound - 1e-6 * max(1, abs(sol.value))

    def test_subgradient_path(self):
        dom, fld = monotone_problem(8)
        cfg = PrimalConfig(method="subgradient", eps_rel=1e-6)
        sol = minimize_primal(dom, fld, cfg)
        d = solve_brute(dom, fld).value
        assert sol.converged
        assert sol.value == pytest.approx(d, rel=1e-5)
        assert sol.method == "subgradient"
        assert sol.iterations >= 1

    def test_subgradient_without_bound_makes_progress(self):
        rng = np.random.default_rng(25)
        dom, fld = random_problem(rng, 10)
        cfg = PrimalConfig(method="subgradient", eps_rel=1e-6, lp_cap=0, max_iters=2000)
        sol = minimize_primal(dom, fld, cfg)
        zero_val = primal_objective(dom, fld, sd.AntiSymmetricKernel.zero(10))
        oracle = solve_brute(dom, fld).value
        assert sol.value <= zero_val + 1e-12
        assert sol.value >= oracle - 1e-9

    def test_iteration_cap_flags_nonconvergence(self):
        dom, fld = sincos_problem(24)
        cfg = PrimalConfig(method="subgradient", eps_rel=1e-12, max_iters=3)
        sol = minimize_primal(dom, fld, cfg)
        assert not sol.converged
        assert sol.iterations == 3

    def test_lp_duality_crosscheck(self):
        # the dual of the kernel program is exactly the symmetric doubly
        # stochastic relaxation; certified here with an independent LP
        rng = np.random.default_rng(26)
        for _ in range(8):
            n = int(rng.integers(2, 9))
            dom, fld = random_problem(rng, n, d=int(rng.integers(1, 3)))
            direct = primal_lp_oracle(dom, fld)
            relaxed = lp_bound(dom, fld)
            assert direct == pytest.approx(relaxed, rel=1e-7, abs=1e-9)
            sol = minimize_primal(dom, fld)
            assert sol.value == pytest.approx(direct, rel=1e-5, abs=1e-8)


class TestRecoverInvolution:
    def test_zero_kernel_not_a_permutation(self):
        dom, fld = monotone_problem(12)
        rec = recover_involution(sd.AntiSymmetricKernel.zero(12), dom, fld)
        # every index maxes out at the right endpoint
        assert not rec.is_permutation
        assert (rec.candidate == 11).all()

    def test_sincos_rounded_reflection(self):
        dom, fld = sincos_problem(64)
        sol = minimize_primal(dom, fld)
        rec = recover_involution(sol.kernel, dom, fld)
        assert rec.rounded is not None
        refl = np.arange(64)[::-1]
        assert (rec.rounded.sigma == refl).mean() >= 0.95

    def test_sincos_analytic_kernel_raw_candidate(self):
        # a strictly complementary kernel needs no rounding: the argmax map
        # itself is the reflection involution
        dom, fld = sincos_problem(64)
        kernel = sd.make_kernel(dom, lambda x, y: x * np.sin(y) - y * np.sin(x))
        rec = recover_involution(kernel, dom, fld)
        refl = np.arange(64)[::-1]
        assert rec.is_permutation and rec.is_involution
        assert (rec.candidate == refl).mean() >= 0.95

    def test_monotone_rounded_identity(self):
        dom, fld = monotone_problem(16)
        sol = minimize_primal(dom, fld)
        rec = recover_involution(sol.kernel, dom, fld)
        assert rec.rounded is not None
        assert np.array_equal(rec.rounded.sigma, np.arange(16))

    def test_tight_pairs_contain_optimal_cycles(self):
        dom, fld = sincos_problem(32)
        sol = minimize_primal(dom, fld)
        s = solve_matching(dom, fld).sigma
        rec = recover_involution(sol.kernel, dom, fld)
        tight = set(rec.tight_pairs)
        for i, j in s.pairs():
            assert (i, j) in tight
