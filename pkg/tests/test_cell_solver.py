import math

import numpy as np
import pytest

from conducta.cell_solver import (
    EffectiveTensor,
    SolverConfig,
    build_optimal_potential,
    constructive_upper,
    constructive_value,
    evaluate_I1,
    evaluate_I2,
    oscillation_closed_form,
    oscillation_of_theta,
    solve_effective_tensor,
    traceless_hessian,
)
from conducta.errors import ConvergenceError
from conducta.microstructure import (
    VoxelGrid,
    empirical_phase_set,
    generate_checkerboard,
    generate_laminate,
    generate_random,
)
from conducta.phases import PhaseSet, shifted_harmonic_L

from conftest import random_phase_set

TWO_14 = PhaseSet.from_pairs((1.0, 4.0), (0.5, 0.5), 2)


def homogeneous(c=3.0, shape=(8, 8)):
    return VoxelGrid(np.zeros(shape, np.uint8), (c,))


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(relative_tolerance=0.0)
        with pytest.raises(ValueError):
            SolverConfig(max_iterations=0)
        with pytest.raises(ValueError):
            SolverConfig(reference_conductivity=-1.0)

    def test_tensor_symmetry_enforced(self):
        with pytest.raises(ValueError, match="symmetric"):
            EffectiveTensor(2, np.array([[1.0, 0.5], [0.0, 1.0]]), 1.0, (1, 1), (0.0, 0.0), 0.0)


class TestEffectiveTensor:
    def test_homogeneous_exact_no_iterations(self):
        t = solve_effective_tensor(homogeneous(3.0))
        assert np.array_equal(t.matrix, 3.0 * np.eye(2))
        assert t.iterations == (0, 0)
        assert t.sigma_bar == 3.0

    def test_laminate_harmonic_arithmetic(self):
        g = generate_laminate(TWO_14, 0, (64, 64))
        t = solve_effective_tensor(g)
        # along the lamination normal: harmonic mean, across: arithmetic
        assert t.matrix[0, 0] == pytest.approx(1.6, rel=1e-9)
        assert t.matrix[1, 1] == pytest.approx(2.5, rel=1e-9)
        assert abs(t.matrix[0, 1]) < 1e-10
        assert t.sigma_bar == pytest.approx(2.05, rel=1e-9)

    def test_checkerboard_geometric_mean(self):
        g = generate_checkerboard(1.0, 4.0, (64, 64))
        t = solve_effective_tensor(g)
        assert t.sigma_bar == pytest.approx(2.0, rel=2e-2)

    def test_3d_laminate_oracle(self):
        ps = PhaseSet.from_pairs((1.0, 4.0), (0.5, 0.5), 3)
        t = solve_effective_tensor(generate_laminate(ps, 2, (16, 16, 16)))
        assert t.matrix[2, 2] == pytest.approx(1.6, rel=1e-9)
        assert t.matrix[0, 0] == pytest.approx(2.5, rel=1e-9)
        assert t.matrix[1, 1] == pytest.approx(2.5, rel=1e-9)

    def test_high_contrast_converges(self):
        ps = PhaseSet.from_pairs((1.0, 100.0), (0.5, 0.5), 2)
        g = generate_random(ps, (32, 32), seed=0)
        t = solve_effective_tensor(g, SolverConfig(max_iterations=400))
        assert max(t.iterations) <= 400
        assert all(r <= 1e-8 for r in t.residuals)
        emp = empirical_phase_set(g)
        harm = 1.0 / math.fsum(m / s for s, m in zip(emp.conductivities, emp.fractions))
        arit = math.fsum(m * s for s, m in zip(emp.conductivities, emp.fractions))
        assert harm * (1 - 1e-9) <= t.sigma_bar <= arit * (1 + 1e-9)

    def test_axis_permutation_equivariance(self):
        g = generate_random(TWO_14, (32, 32), seed=11)
        gp = VoxelGrid(np.ascontiguousarray(g.phase_index.T), g.phase_conductivities)
        a = solve_effective_tensor(g).matrix
        b = solve_effective_tensor(gp).matrix
        perm = b[::-1, ::-1].T
        assert np.abs(a - perm).max() < 1e-12

    def test_wiener_sandwich(self):
        rng = np.random.default_rng(0)
        for seed in range(3):
            ps = random_phase_set(rng, 3, 2)
            g = generate_random(ps, (32, 32), seed=seed)
            emp = empirical_phase_set(g)
            t = solve_effective_tensor(g)
            harm = 1.0 / math.fsum(m / s for s, m in zip(emp.conductivities, emp.fractions))
            arit = math.fsum(m * s for s, m in zip(emp.conductivities, emp.fractions))
            eigs = t.eigenvalues
            assert eigs.min() >= harm * (1 - 1e-9)
            assert eigs.max() <= arit * (1 + 1e-9)

    def test_flux_discrepancy_small_at_convergence(self):
        g = generate_random(TWO_14, (32, 32), seed=1)
        t = solve_effective_tensor(g, SolverConfig(relative_tolerance=1e-10))
        assert t.flux_discrepancy < 1e-8

    def test_nonconvergence_raises_with_residual(self):
        g = generate_random(TWO_14, (32, 32), seed=1)
        with pytest.raises(ConvergenceError) as err:
            solve_effective_tensor(g, SolverConfig(relative_tolerance=1e-14, max_iterations=2))
        assert err.value.iterations == 2
        assert err.value.residual > 0.0


class TestOptimalPotential:
    def test_rejects_nonpositive_S(self):
        with pytest.raises(ValueError):
            build_optimal_potential(homogeneous(), 0.0)

    def test_homogeneous_all_zero(self):
        pf = build_optimal_potential(homogeneous(3.0), 1.0)
        assert np.abs(pf.theta).max() == 0.0
        assert np.abs(pf.hessian_p).max() == 0.0
        assert pf.I2 == 0.0 and pf.I2_positive_part == 0.0
        assert evaluate_I1(pf) == pytest.approx(3.0, rel=1e-14)

    def test_two_phase_theta_values_and_oscillation(self):
        # sigma=(1,2) at 50/50, n=2, S=1: theta = +-0.4, osc = 0.8
        ps = PhaseSet.from_pairs((1.0, 2.0), (0.5, 0.5), 2)
        g = generate_laminate(ps, 0, (8, 8))
        pf = build_optimal_potential(g, 1.0)
        sigma = g.conductivity_field()
        assert pf.theta[sigma == 1.0] == pytest.approx(0.4, rel=1e-12)
        assert pf.theta[sigma == 2.0] == pytest.approx(-0.4, rel=1e-12)
        assert oscillation_of_theta(pf) == pytest.approx(0.8, rel=1e-12)
        assert oscillation_closed_form(g, 1.0) == pytest.approx(0.8, rel=1e-12)

    def test_theta_zero_mean_and_p_zero_frequency(self):
        g = generate_random(TWO_14, (32, 32), seed=2)
        pf = build_optimal_potential(g, 2.0)
        assert abs(pf.theta.mean()) < 1e-10
        assert pf.p_hat[0, 0] == 0.0

    def test_hessian_trace_is_laplacian_pointwise(self):
        g = generate_random(TWO_14, (32, 32), seed=3)
        pf = build_optimal_potential(g, 2.0)
        trace = pf.hessian_p[0, 0] + pf.hessian_p[1, 1]
        assert np.abs(trace - pf.laplacian_p).max() < 1e-10

    def test_hessian_laplacian_energy_identity(self):
        for seed, S in ((4, 1.0), (5, 2.5)):
            g = generate_random(TWO_14, (64, 64), seed=seed)
            pf = build_optimal_potential(g, S)
            h2 = float(np.sum(pf.hessian_p**2, axis=(0, 1)).mean())
            l2 = float((pf.laplacian_p**2).mean())
            assert abs(h2 - l2) <= 1e-8 * max(1.0, l2)

    def test_pointwise_matrix_inequality(self):
        g = generate_random(TWO_14, (32, 32), seed=6)
        pf = build_optimal_potential(g, 1.5)
        raw = np.sum(pf.hessian_p**2, axis=(0, 1)) - pf.laplacian_p**2 / 2
        assert raw.min() > -1e-12

    def test_traceless_energy_below_theta_energy(self):
        g = generate_random(TWO_14, (64, 64), seed=7)
        pf = build_optimal_potential(g, 2.0)
        tr = traceless_hessian(pf)
        lhs = float(np.sum(tr**2, axis=(0, 1)).mean())
        rhs = 0.5 * float((pf.theta**2).mean())
        assert lhs <= rhs + 1e-8 * max(1.0, rhs)

    def test_oscillation_closed_form_matches(self):
        g = generate_random(PhaseSet.from_pairs((1.0, 2.0, 5.0), (0.4, 0.4, 0.2), 2), (32, 32), seed=8)
        for S in (1.0, 3.0, 5.0):
            pf = build_optimal_potential(g, S)
            assert abs(oscillation_of_theta(pf) - oscillation_closed_form(g, S)) < 1e-10


class TestI1I2:
    def test_i1_quadrature_matches_closed_form(self):
        for seed in (0, 1):
            g = generate_random(TWO_14, (64, 64), seed=seed)
            emp = empirical_phase_set(g)
            for S in (1.0, 2.5, 4.0):
                pf = build_optimal_potential(g, S)
                closed = -(emp.dimension - 1) * S + shifted_harmonic_L(emp, S)
                assert evaluate_I1(pf) == pytest.approx(closed, rel=1e-8)

    def test_i1_closed_form_on_dyadic_laminate(self):
        ps = PhaseSet.from_pairs((1.0, 2.0, 5.0), (0.25, 0.25, 0.5), 3)
        g = generate_laminate(ps, 0, (16, 16, 16))
        pf = build_optimal_potential(g, 2.0)
        closed = -2 * 2.0 + shifted_harmonic_L(ps, 2.0)
        assert evaluate_I1(pf) == pytest.approx(closed, rel=1e-12)

    def test_i2_laminate_closed_form(self):
        # 1D Hessian: the traceless square is (1 - 1/n) theta^2
        g = generate_laminate(TWO_14, 0, (64, 64))
        pf = build_optimal_potential(g, 1.0)
        n, S = 2, 1.0
        L = shifted_harmonic_L(TWO_14, S)
        expected = 0.0
        for s, m in zip(TWO_14.conductivities, TWO_14.fractions):
            theta = n * L / (s + (n - 1) * S) - n
            expected += m * (s - S) * (1 - 1 / n) * theta**2 / n
        i2, i2_pos = evaluate_I2(pf)
        assert i2 == pytest.approx(expected, rel=1e-6)
        assert i2 == pytest.approx(27.0 / 98.0, rel=1e-6)

    def test_i2_below_positive_part_and_zero_at_sup(self):
        g = generate_random(TWO_14, (32, 32), seed=9)
        for S in (1.0, 2.0, 4.0):
            i2, i2_pos = evaluate_I2(build_optimal_potential(g, S))
            assert i2 <= i2_pos
        assert evaluate_I2(build_optimal_potential(g, 4.0))[1] == 0.0

    def test_i2_positive_part_layer_cake_identity(self):
        # pointwise (sigma - S)^+ = integral over t > S of 1_{sigma > t},
        # so the positive-part I2 equals the integral of the superlevel-set
        # energies of the traceless square; this is the step that converts
        # the bound into a statement about the distribution function alone
        ps = PhaseSet.from_pairs((1.0, 2.0, 5.0), (0.4, 0.4, 0.2), 2)
        g = generate_random(ps, (32, 32), seed=12)
        sigma = g.conductivity_field()
        n = g.dimension
        for S in (0.7, 1.5, 3.0):
            pf = build_optimal_potential(g, S)
            q = np.sum(pf.hessian_p**2, axis=(0, 1)) - pf.laplacian_p**2 / n
            thresholds = [S] + [t for t in np.unique(sigma) if t > S]
            integral = 0.0
            for lo, hi in zip(thresholds, thresholds[1:]):
                integral += (hi - lo) * float(q[sigma > lo].sum()) / q.size
            _, i2_pos = evaluate_I2(pf)
            assert i2_pos == pytest.approx(integral / n, rel=1e-12)


class TestConstructiveBound:
    def test_homogeneous_equals_conductivity(self):
        assert constructive_upper(homogeneous(3.0), 1.0) == pytest.approx(3.0, rel=1e-14)

    def test_checkerboard_at_sup_matches_hs(self):
        g = generate_checkerboard(1.0, 4.0, (64, 64))
        hs = -4 + 1.0 / (0.5 / 5 + 0.5 / 8)
        assert constructive_upper(g, 4.0) == pytest.approx(hs, abs=1e-3)

    def test_admissibility_on_random_grids(self):
        rng = np.random.default_rng(123)
        for seed in range(6):
            ps = random_phase_set(rng, 2, 2, sigma_range=(1.0, 5.0))
            g = generate_random(ps, (32, 32), seed=seed)
            sb = solve_effective_tensor(g).sigma_bar
            emp = empirical_phase_set(g)
            for S in (emp.inf_sigma, emp.sup_sigma):
                assert constructive_upper(g, S) >= sb * (1 - 1e-9)

    def test_constructive_value_reuses_field(self):
        g = generate_random(TWO_14, (32, 32), seed=4)
        pf = build_optimal_potential(g, 2.0)
        assert constructive_value(pf) == constructive_upper(g, 2.0)
