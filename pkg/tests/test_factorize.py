import math

import numpy as np
import pytest

import selfdual as sd
from selfdual.domain import rotation_permutation, swap_permutation
from selfdual.factorize import (
    PipelineConfig,
    check_monotone,
    check_uniqueness,
    decompose,
    krauss_check,
    second_identity_check,
    selfdual_test,
)

from conftest import (
    matrix_problem,
    monotone_problem,
    random_involution,
    random_kernel,
    sincos_problem,
    tent_problem,
)


class TestDecompose:
    def test_sincos(self):
        dom, fld = sincos_problem(64)
        rep = decompose(dom, fld)
        refl = np.arange(64)[::-1]
        assert (rep.sigma.sigma == refl).mean() >= 0.95
        assert rep.p_value == pytest.approx(math.pi, rel=0.02)
        assert rep.d_value == pytest.approx(math.pi, rel=0.02)
        assert rep.residual1.median <= 0.1
        assert rep.gap >= -1e-12 * abs(rep.p_value)
        assert (rep.complementarity >= 0).all()
        mu = dom.cell_measure
        assert rep.complementarity.sum() * mu == pytest.approx(
            rep.gap, rel=1e-9, abs=1e-12
        )
        assert rep.monotone.verdict == "non-monotone"

    def test_monotone_identity_and_krauss(self):
        dom, fld = monotone_problem(16)
        rep = decompose(dom, fld)
        assert np.array_equal(rep.sigma.sigma, np.arange(16))
        assert rep.monotone.verdict == "strictly-monotone"
        assert rep.uniqueness.verdict == "uniqueness-plausible"
        stats = krauss_check(dom, fld, rep.hamiltonian)
        h = rep.tolerances["fd_step"]
        assert stats.median <= 10 * (h + dom.mesh)

    def test_matrix_swap(self):
        dom, fld, bf = matrix_problem(12)
        rep = decompose(dom, fld, rule=bf.rule, jacobian=bf.jacobian)
        swap = swap_permutation(dom)
        assert (rep.sigma.sigma == swap.sigma).mean() >= 0.90
        assert rep.residual1.median <= 0.15
        assert rep.uniqueness.verdict == "uniqueness-plausible"

    def test_matrix_analytic_kernel_residuals(self):
        # the closed-form planar Hamiltonian reproduces u along the swap
        dom, fld, bf = matrix_problem(8)
        kernel = sd.make_kernel(dom, bf.hamiltonian)
        ball = sd.ball_radius(dom, fld)
        pset = sd.build_dual_points(dom, fld, ball)
        hreg = sd.regularize(kernel, dom, pset)
        h = 1e-4 * ball.value
        swap = swap_permutation(dom)
        g1 = sd.grad1(hreg, dom.points[swap.sigma], dom.points, h)
        res1 = np.linalg.norm(fld.values - np.atleast_2d(g1), axis=1)
        assert np.median(res1) <= 10 * (h + dom.mesh)

    def test_report_dict_schema(self):
        dom, fld = sincos_problem(16)
        rep = decompose(dom, fld)
        d = rep.to_dict()
        assert set(d) == {
            "P",
            "D",
            "gap",
            "sigma",
            "residual1",
            "residual2",
            "complementarity",
            "monotone",
            "uniqueness",
            "config",
        }
        for key in ("tol_reg", "pset_covering_radius", "fd_step", "eps_primal"):
            assert key in d["config"]

    def test_brute_path_on_small_instance(self):
        dom, fld = monotone_problem(8)
        rep = decompose(dom, fld, PipelineConfig(dual_method="brute"))
        assert rep.tolerances["dual_method"] == "brute"
        assert np.array_equal(rep.sigma.sigma, np.arange(8))

    def test_local_path_small_instance(self):
        dom, fld = monotone_problem(10)
        rep = decompose(dom, fld, PipelineConfig(dual_method="local"))
        assert rep.tolerances["dual_method"] == "local"
        assert np.array_equal(rep.sigma.sigma, np.arange(10))

    def test_config_overrides_reach_report(self):
        dom, fld = sincos_problem(16)
        cfg = PipelineConfig(sphere_points=8, fd_step_rel=1e-3, eps_primal=1e-4)
        rep = decompose(dom, fld, cfg)
        ball = sd.ball_radius(dom, fld, cfg.radius_margin)
        assert rep.tolerances["fd_step"] == pytest.approx(1e-3 * ball.value)
        assert rep.tolerances["eps_primal"] == 1e-4
        # dedup can only shrink the assembled set: origin + values + shell
        assert rep.tolerances["pset_size"] <= 16 + 8 + 1


class TestSelfdualTest:
    def test_involutions_cancel_exactly(self):
        rng = np.random.default_rng(30)
        for _ in range(1000):
            n = int(rng.integers(2, 14))
            kernel = random_kernel(rng, n, scale=float(rng.uniform(0.5, 50)))
            s = random_involution(rng, n)
            value, verdict = selfdual_test(kernel, s, mu=0.37)
            assert value == 0.0
            assert verdict == "self-dual-consistent"

    def test_difference_kernel_any_permutation(self):
        rng = np.random.default_rng(31)
        dom = sd.interval_grid(0.0, 1.0, 9)
        f = np.cos(3 * dom.points[:, 0])
        kernel = sd.AntiSymmetricKernel.from_matrix(f[:, None] - f[None, :])
        for _ in range(50):
            perm = rng.permutation(9)
            value, verdict = selfdual_test(kernel, perm, mu=1.0 / 9)
            assert verdict == "self-dual-consistent"

    def test_rotation_map_detected(self):
        dom = sd.symmetric_square_grid(1.0, 4)
        jx = np.stack([-dom.points[:, 1], dom.points[:, 0]], axis=1)
        kernel = sd.AntiSymmetricKernel.from_matrix(jx @ dom.points.T)
        rot = rotation_permutation(dom)
        mu = dom.cell_measure
        value, verdict = selfdual_test(kernel, rot, mu)
        expect = -float((dom.points**2).sum() * mu)
        assert value == pytest.approx(expect, rel=1e-12)
        assert value < 0
        assert verdict == "not-self-dual"


class TestCheckMonotone:
    def test_linear(self):
        dom, fld = monotone_problem(12)
        assert check_monotone(dom, fld).verdict == "strictly-monotone"

    def test_sincos_non_monotone(self):
        dom, fld = sincos_problem(32)
        v = check_monotone(dom, fld)
        assert v.verdict == "non-monotone"
        i, j = v.worst_pair
        pairing = float(
            (dom.points[i] - dom.points[j]) @ (fld.values[i] - fld.values[j])
        )
        assert pairing == pytest.approx(v.min_pairing)
        assert pairing < 0

    def test_gradskew_strict(self):
        dom = sd.symmetric_square_grid(1.0, 5)
        a = np.array([[0.0, 2.0], [-2.0, 0.0]])
        fld = sd.sample_field(dom, lambda p: 2.0 * p + a @ p)
        assert check_monotone(dom, fld).verdict == "strictly-monotone"

    def test_rotation_field_monotone_not_strict(self):
        dom = sd.symmetric_square_grid(1.0, 4)
        fld = sd.sample_field(dom, lambda p: np.array([-p[1], p[0]]))
        v = check_monotone(dom, fld)
        assert v.verdict == "monotone"
        assert v.min_pairing == 0.0


class TestCheckUniqueness:
    def test_matrix_with_nonsingular_symmetric_part(self):
        dom, fld, bf = matrix_problem(8)
        v = check_uniqueness(dom, fld, rule=bf.rule, jacobian=bf.jacobian)
        assert v.verdict == "uniqueness-plausible"
        assert v.heuristic

    def test_tent_flagged_non_unique(self):
        dom, fld = tent_problem(32)
        rule = lambda x: 2.0 * x if x <= 0.5 else 3.0 - 2.0 * x
        jac = lambda x: np.array([[2.0 if x <= 0.5 else -2.0]])
        v = check_uniqueness(dom, fld, rule=rule, jacobian=jac)
        assert v.verdict == "non-unique-plausible"

    def test_strictly_monotone_plausible(self):
        dom, fld = monotone_problem(24)
        v = check_uniqueness(dom, fld, rule=lambda x: x)
        assert v.verdict == "uniqueness-plausible"

    def test_sample_only_fallback(self):
        dom, fld = tent_problem(32)
        v = check_uniqueness(dom, fld)  # jacobians estimated from samples
        assert v.verdict == "non-unique-plausible"


class TestKraussCheck:
    def test_quadratic_pair(self):
        dom, fld = monotone_problem(64)
        kernel = sd.make_kernel(dom, lambda x, y: 0.5 * x * x - 0.5 * y * y)
        ball = sd.ball_radius(dom, fld)
        pset = sd.build_dual_points(dom, fld, ball)
        hreg = sd.regularize(kernel, dom, pset)
        h = 1e-4 * ball.value
        stats = krauss_check(dom, fld, hreg, h)
        assert stats.median <= 10 * (h + dom.mesh)

    def test_gradient_plus_skew_pair(self):
        dom = sd.symmetric_square_grid(1.0, 8)
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        fld = sd.sample_field(dom, lambda p: 2.0 * p + a @ p)
        kernel = sd.make_kernel(
            dom, lambda x, y: float(x @ x) - float(y @ y) - float((a @ x) @ y)
        )
        ball = sd.ball_radius(dom, fld)
        pset = sd.build_dual_points(dom, fld, ball)
        hreg = sd.regularize(kernel, dom, pset)
        h = 1e-4 * ball.value
        stats = krauss_check(dom, fld, hreg, h)
        assert stats.median <= 10 * (h + dom.mesh)

    def test_refuses_non_monotone(self):
        dom, fld = sincos_problem(16)
        kernel = sd.make_kernel(dom, lambda x, y: x * np.sin(y) - y * np.sin(x))
        ball = sd.ball_radius(dom, fld)
        pset = sd.build_dual_points(dom, fld, ball)
        hreg = sd.regularize(kernel, dom, pset)
        with pytest.raises(ValueError):
            krauss_check(dom, fld, hreg)


class TestSecondIdentity:
    def test_sincos_reflection(self):
        dom, fld = sincos_problem(64)
        kernel = sd.make_kernel(dom, lambda x, y: x * np.sin(y) - y * np.sin(x))
        ball = sd.ball_radius(dom, fld)
        pset = sd.build_dual_points(dom, fld, ball)
        hreg = sd.regularize(kernel, dom, pset)
        stats = second_identity_check(dom, fld, hreg, sd.Involution.reversal(64))
        assert stats.median <= 0.1

    def test_monotone_identity_reduces_to_krauss(self):
        dom, fld = monotone_problem(32)
        kernel = sd.make_kernel(dom, lambda x, y: 0.5 * x * x - 0.5 * y * y)
        ball = sd.ball_radius(dom, fld)
        pset = sd.build_dual_points(dom, fld, ball)
        hreg = sd.regularize(kernel, dom, pset)
        h = 1e-4 * ball.value
        res2 = second_identity_check(dom, fld, hreg, sd.Involution.identity(32), h)
        krauss = krauss_check(dom, fld, hreg, h)
        # same points, second-slot derivative of the sign-flipped evaluator
        assert res2.median == pytest.approx(krauss.median, abs=10 * (h + dom.mesh))


class TestGapTrend:
    def test_sincos_gap_small_and_nonincreasing(self):
        fracs = []
        for n in (16, 32, 64):
            dom, fld = sincos_problem(n)
            rep = decompose(dom, fld)
            fracs.append(rep.gap / abs(rep.p_value))
        assert fracs[-1] <= 0.02
        for a, b in zip(fracs, fracs[1:]):
            assert b <= a + 1e-9
