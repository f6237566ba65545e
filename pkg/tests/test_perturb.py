"""Tests for the eigenvalue-1 perturbation pipeline and asymptotic laws.

Frozen reference numbers come from independent routes: dense
eigendecompositions of the assembled transition operator at small
perturbation strength, closed forms for the reflection / dephased /
scalar families worked out by hand, exact-moment recursions, and Monte
Carlo runs.  None of them are outputs of the code under test.
"""

import math
import warnings

import numpy as np
import pytest
from scipy.special import i0, i1, j0, j1

from latticewalk.models import (
    ControlProcess,
    InitialState,
    MarkovWalkModel,
    dephased_hadamard_model,
    hadamard_reflection_model,
    hadamard_walk,
    momentum_shift_model,
    random_walk_model,
    scalar_kraus_model,
    shift_1d,
    symmetrized_pair,
    walk_2d,
)
from latticewalk.perturb import (
    ComplexVarianceWarning,
    ballistic_velocity,
    bernoulli_diffusion,
    build_transition,
    check_assumptions,
    commuting_kraus_velocity,
    diffusion_matrix,
    first_order,
    gaussian_limit_density,
    invariant_state,
    mean_index_velocity,
    momentum_shift_asymptotics,
    next_order_cf,
    next_order_density,
    perturbation_report,
    scalar_velocity,
)
from latticewalk.simulate import markov_exact_moments, simulate_markov
from latticewalk.spectral import dispersion, group_velocity
from latticewalk.trigpoly import TrigPolyMatrix

SCALAR_COEFFS = [{0: 0.5, 1: 0.5}, {0: 0.5, -1: -0.5}]

SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


def up_state():
    return InitialState.localized([1.0, 0.0])


def midpoint_grid(n):
    return -np.pi + (2.0 * np.pi / n) * (np.arange(n) + 0.5)


def uniform_momentum_state(n=256, coin_dim=1):
    grid = midpoint_grid(n)
    rho = np.zeros((n, coin_dim, coin_dim))
    rho[:, 0, 0] = 1.0 / (2.0 * np.pi)
    return InitialState.from_momentum_density(grid, rho)


def reflection_variance(epsilon):
    # Diffusion coefficient of the Bernoulli Hadamard/reflection mixture:
    # runs between reflections are geometric with mean (1 - eps)/eps.
    return (1.0 - epsilon) / epsilon


def dephased_variance(p, theta, epsilon):
    # Closed form for the dephased-Hadamard diffusion coefficient,
    # validated against the dense-eigenvalue oracle in
    # TestDiffusion.test_dephased_dense_eigenvalue_oracle.
    num = np.cos(p + theta) ** 2 + epsilon * np.sin(2.0 * p + theta) * np.sin(theta)
    return num / (epsilon * (1.0 - epsilon) * np.sin(theta) ** 2) - 1.0


def dephased_variance_display(p, theta, epsilon):
    # Superficially plausible closed form that exceeds the true
    # coefficient by exactly one; kept as a regression reference for the
    # dense-eigenvalue oracle, which rejects it.
    return dephased_variance(p, theta, epsilon) + 1.0


def nearest_unit_eigenvalue(matrix):
    ev = np.linalg.eigvals(matrix)
    return ev[np.argmin(np.abs(ev - 1.0))]


class TestBuildTransition:
    def test_shape_and_metadata(self):
        model = hadamard_reflection_model(0.5)
        op = build_transition(model, 0.7, (1.0,), 0.0)
        assert op.matrix.shape == (8, 8)
        assert op.n_states == 2
        assert op.coin_dim == 2
        assert op.momentum == (0.7,)
        assert op.direction == (1.0,)
        assert op.epsilon == 0.0

    def test_identity_blocks_fixed_at_zero_strength(self):
        # At eps = 0 every per-state channel is trace preserving in both
        # slots, so the stacked identity blocks are an exact fixed point.
        model = hadamard_reflection_model(0.5)
        op = build_transition(model, 0.7, (1.0,), 0.0)
        vec = np.tile(np.eye(2, dtype=complex).reshape(-1), 2)
        assert np.linalg.norm(op.matrix @ vec - vec) < 1e-12

    def test_unit_eigenvalue_is_simple(self):
        model = hadamard_reflection_model(0.5)
        op = build_transition(model, 0.7, (1.0,), 0.0)
        ev = np.linalg.eigvals(op.matrix)
        assert int(np.sum(np.abs(ev - 1.0) < 1e-9)) == 1
        second = np.sort(np.abs(ev))[-2]
        assert second < 0.9

    def test_direction_dimension_validated(self):
        model = hadamard_reflection_model(0.5)
        with pytest.raises(ValueError, match="expected"):
            build_transition(model, 0.7, (1.0, 0.0), 0.0)


class TestInvariantState:
    def test_bernoulli_reflection_mixture(self):
        state = invariant_state(hadamard_reflection_model(0.2))
        assert np.allclose(state.mbar, [0.8, 0.2], atol=1e-12)
        assert np.allclose(state.rho, np.eye(2) / 2.0, atol=1e-10)
        assert state.faithful
        assert state.residual < 1e-10
        state.require_faithful()

    def test_markov_controlled_stationary_law(self):
        # Chain rows (0.9, 0.1) / (0.7, 0.3): stationary law is the
        # normalized left fixed vector (0.7, 0.1)/0.8.
        state = invariant_state(hadamard_reflection_model(0.0, markov_rates=(0.9, 0.3)))
        assert np.allclose(state.mbar, [0.875, 0.125], atol=1e-12)
        assert state.faithful

    def test_scalar_family_has_trivial_state(self):
        state = invariant_state(scalar_kraus_model(SCALAR_COEFFS))
        assert np.allclose(state.mbar, [1.0], atol=1e-12)
        assert np.allclose(state.rho, [[1.0]], atol=1e-12)
        assert state.faithful


class TestCheckAssumptions:
    def test_reflection_mixture_passes(self):
        rng = np.random.default_rng(31415)
        samples = rng.uniform(-np.pi, np.pi, 16)
        report = check_assumptions(hadamard_reflection_model(0.2), samples)
        assert report.chain_positive_power == 1
        assert report.algebra_rank == 4
        assert report.coin_dim == 2
        assert not report.commuting_kraus
        assert report.invariant.faithful
        for point in report.points:
            assert point.unit_multiplicity == 1
            assert point.gap > 0.0

    def test_single_unitary_is_degenerate(self):
        # A lone unitary channel keeps every momentum fiber doubly
        # degenerate at modulus one: multiplicity 2, zero gap, and the
        # interior algebra is the commutant-sized rank 2.
        model = MarkovWalkModel(ControlProcess([[1.0]]), [[hadamard_walk()]])
        report = check_assumptions(model, [0.3, 1.2])
        assert report.algebra_rank == 2
        assert report.commuting_kraus
        for point in report.points:
            assert point.unit_multiplicity == 2
            assert point.gap == pytest.approx(0.0, abs=1e-12)

    def test_fully_dephased_family_commutes(self):
        # theta = pi makes the extra rotation diagonal, so the two Kraus
        # factors commute and the fiber degenerates.
        report = check_assumptions(dephased_hadamard_model(np.pi, 0.3), [0.4, 1.7])
        assert report.commuting_kraus
        assert report.algebra_rank == 2
        for point in report.points:
            assert point.unit_multiplicity == 2


class TestVelocity:
    def test_reflection_mixture_has_zero_drift(self):
        model = hadamard_reflection_model(0.2)
        for p in np.linspace(-3.0, 3.0, 8):
            assert np.allclose(ballistic_velocity(model, p), [0.0], atol=1e-10)

    def test_scalar_family_velocity_profile(self):
        # E[step] = |c_{+1}|^2 - |c_{-1}|^2 pointwise in momentum gives
        # v(p) = cos(p)/2 for this two-channel family.
        model = scalar_kraus_model(SCALAR_COEFFS)
        for p in (-2.1, -0.3, 0.7, 1.9):
            v = ballistic_velocity(model, p)
            assert abs(v[0] - 0.5 * math.cos(p)) < 1e-10

    def test_mean_index_velocity_matches_ballistic(self):
        # Even mixture of a double shift (index 2 per coin dimension...
        # index 1 here per unit cell) and the identity: mean index 0.5,
        # and the drift is momentum independent, so the two agree.
        dshift = TrigPolyMatrix(1, 2, {(1,): np.eye(2)})
        ident = TrigPolyMatrix(1, 2, {(0,): np.eye(2)})
        model = MarkovWalkModel(
            ControlProcess([[0.5, 0.5], [0.5, 0.5]]), [[dshift], [ident]]
        )
        mean_v = mean_index_velocity(model)
        assert np.allclose(mean_v, [0.5], atol=1e-12)
        assert np.allclose(ballistic_velocity(model, 0.9), mean_v, atol=1e-9)

    def test_mean_index_zero_for_reflection_mixture(self):
        assert np.allclose(mean_index_velocity(hadamard_reflection_model(0.3)), [0.0],
                           atol=1e-12)


class TestFirstOrder:
    def test_pauli_components_of_averaged_solution(self):
        # For the Bernoulli reflection mixture the mbar-averaged solution
        # has Pauli decomposition (i/(2 eps)) (sigma1 + tan(p) sigma2 +
        # sigma3); derived by solving the 3x3 Pauli-basis linear system of
        # (T_0 - id) by hand.
        eps = 0.2
        model = hadamard_reflection_model(eps)
        state = invariant_state(model)
        for p in (np.pi / 4, 0.7):
            res = first_order(model, p, (1.0,))
            avg = np.einsum("g,gij->ij", state.mbar, res.blocks)
            for sigma, expect in (
                (SIGMA1, 1.0 / (2.0 * eps)),
                (SIGMA2, math.tan(p) / (2.0 * eps)),
                (SIGMA3, 1.0 / (2.0 * eps)),
            ):
                coeff = np.trace(sigma @ avg) / 2.0
                assert abs(coeff - 1j * expect) < 1e-9

    def test_per_state_diagonal_components(self):
        # The two control-state blocks differ in their sigma3 component
        # (+3.5i and -1.5i at eps = 0.2); their (0.8, 0.2)-average is the
        # 2.5i seen above.
        model = hadamard_reflection_model(0.2)
        res = first_order(model, np.pi / 4, (1.0,))
        diag = [np.trace(SIGMA3 @ res.blocks[g]) / 2.0 for g in range(2)]
        assert abs(diag[0] - 3.5j) < 1e-9
        assert abs(diag[1] + 1.5j) < 1e-9

    def test_solution_is_skew_with_zero_expectation(self):
        model = hadamard_reflection_model(0.2)
        state = invariant_state(model)
        res = first_order(model, 0.7, (1.0,))
        skew = res.blocks + res.blocks.conj().transpose(0, 2, 1)
        assert np.max(np.abs(skew)) < 1e-12
        expect = np.einsum("g,gij,ji->", state.mbar, res.blocks, state.rho)
        assert abs(expect) < 1e-12
        assert res.residual < 1e-12
        assert res.gap > 0.1
        assert res.momentum == (0.7,)
        assert res.direction == (1.0,)

    def test_scalar_solution_vanishes(self):
        # With a one-dimensional coin the zero-mean constraint forces
        # A' = 0 identically.
        res = first_order(scalar_kraus_model(SCALAR_COEFFS), 0.7, (1.0,))
        assert np.max(np.abs(res.blocks)) < 1e-12


class TestDiffusion:
    def test_bernoulli_reflection_coefficient(self):
        for eps in (0.2, 0.5, 0.8):
            expect = reflection_variance(eps)
            model = hadamard_reflection_model(eps)
            s = diffusion_matrix(model, (0.7,))
            assert abs(s[0, 0] - expect) < 1e-8
            sb = bernoulli_diffusion(model, (0.7,))
            assert abs(sb[0, 0] - expect) < 1e-8

    def test_markov_controlled_coefficients(self):
        # Closed form for flip rates (m1, m2):
        # s = ((1-m2)/(1-m1)) * (m1+m2)/(2-m1-m2).
        cases = {(0.9, 0.3): 10.5, (0.5, 0.5): 1.0, (0.6, 0.2): 4.0 / 3.0}
        for rates, expect in cases.items():
            model = hadamard_reflection_model(0.0, markov_rates=rates)
            s = diffusion_matrix(model, (0.7,))
            assert abs(s[0, 0] - expect) < 1e-8

    def test_bernoulli_route_rejects_markov_control(self):
        model = hadamard_reflection_model(0.0, markov_rates=(0.9, 0.3))
        with pytest.raises(ValueError):
            bernoulli_diffusion(model, (0.7,))

    def test_dephased_routes_agree(self):
        model = dephased_hadamard_model(np.pi / 3, 0.3)
        s = diffusion_matrix(model, (0.4,))
        sb = bernoulli_diffusion(model, (0.4,))
        assert abs(s[0, 0] - sb[0, 0]) < 1e-9

    def test_dephased_closed_form(self):
        cases = [
            (0.4, np.pi / 3, 0.3, 0.6834623674212763),
            (1.9, np.pi / 3, 0.3, 3.4776746652043657),
            (-0.8, 2.0, 0.7, 1.1837555454567639),
        ]
        for p, theta, eps, frozen in cases:
            s = diffusion_matrix(dephased_hadamard_model(theta, eps), (p,))
            assert abs(s[0, 0] - dephased_variance(p, theta, eps)) < 1e-10
            assert abs(s[0, 0] - frozen) < 1e-12

    def test_dephased_symmetric_point_is_constant_one(self):
        # theta = pi/2, eps = 1/2 flattens the momentum dependence
        # entirely: s(p) = 1 for every p.
        model = dephased_hadamard_model(np.pi / 2, 0.5)
        for p in midpoint_grid(128):
            s = diffusion_matrix(model, (p,))
            assert abs(s[0, 0] - 1.0) < 1e-12

    def test_dephased_dense_eigenvalue_oracle(self):
        # Independent check that the pipeline coefficient (and not the
        # display variant one unit larger) matches the actual eigenvalue
        # branch through 1: at strength e the branch sits at
        # 1 - e^2 s/2 + O(e^3) for this drift-free family.
        theta, eps, p = np.pi / 3, 0.3, 0.4
        model = dephased_hadamard_model(theta, eps)
        s_true = diffusion_matrix(model, (p,))[0, 0].real
        e = 1e-4
        mu = nearest_unit_eigenvalue(build_transition(model, p, (1.0,), e).matrix)
        assert abs(mu - (1.0 - e * e * s_true / 2.0)) < 1e-11
        s_display = dephased_variance_display(p, theta, eps)
        assert abs(s_display - s_true - 1.0) < 1e-12
        assert abs(mu - (1.0 - e * e * s_display / 2.0)) > 1e-9

    def test_scalar_family_complex_variance(self):
        # Interference makes the variance-rate genuinely complex for this
        # family; both routes must agree on the value and warn.
        p = 0.7
        expect = (2.0 + 2.0j * math.sin(p) - math.cos(p) ** 2) / 4.0
        model = scalar_kraus_model(SCALAR_COEFFS)
        with pytest.warns(ComplexVarianceWarning):
            s = diffusion_matrix(model, (p,))
        assert abs(s[0, 0] - expect) < 1e-10
        with pytest.warns(ComplexVarianceWarning):
            sb = bernoulli_diffusion(model, (p,))
        assert abs(sb[0, 0] - expect) < 1e-10


class TestPerturbationReport:
    def test_reflection_mixture_report(self):
        report = perturbation_report(hadamard_reflection_model(0.2), 0.7)
        assert report.momentum == (0.7,)
        assert report.unitary
        assert np.allclose(report.invariant.mbar, [0.8, 0.2], atol=1e-12)
        assert np.allclose(report.velocity, [0.0], atol=1e-10)
        assert np.allclose(report.diffusion, [[4.0]], atol=1e-8)
        mupp = report.second_order[(1.0,)]
        assert abs(mupp + 4.0) < 1e-8
        assert abs(mupp.imag) < 1e-10
        assert report.gap > 0.1
        assert len(report.first_order) == 1
        assert all(r < 1e-9 for r in report.residuals)

    def test_two_dimensional_mixture_report(self):
        # Bernoulli mixture of two 2D coined walks with swapped angle
        # triples; the diffusion matrix must come out symmetric and
        # positive definite, with (numerically) zero drift.
        a = (np.pi / 3, np.pi / 4, np.pi / 4)
        b = (-np.pi / 3, -np.pi / 4, np.pi / 3)
        model = MarkovWalkModel(
            ControlProcess([[0.7, 0.3], [0.7, 0.3]]),
            [[walk_2d(a, b)], [walk_2d(b, a)]],
        )
        report = perturbation_report(model, (0.3, -1.1))
        assert report.unitary
        assert np.allclose(report.velocity, [0.0, 0.0], atol=1e-12)
        diff = np.asarray(report.diffusion, dtype=float)
        assert diff.shape == (2, 2)
        assert np.allclose(diff, diff.T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(diff)) > 0.0
        frozen = np.array(
            [[1.13262471, 1.64016388], [1.64016388, 3.74476504]]
        )
        assert np.allclose(diff, frozen, atol=1e-6)


class TestGaussianLimit:
    def test_reflection_mixture_is_exactly_gaussian(self):
        # s(p) is constant for this family, so the limit density is a
        # single centered Gaussian of variance (1-eps)/eps.
        x = np.linspace(-12.0, 12.0, 481)
        for eps in (0.2, 0.5):
            var = reflection_variance(eps)
            dens = gaussian_limit_density(
                hadamard_reflection_model(eps), up_state(), x
            )
            ref = np.exp(-(x**2) / (2.0 * var)) / math.sqrt(2.0 * np.pi * var)
            assert np.max(np.abs(dens - ref)) < 1e-12

    def test_dephased_symmetric_point_standard_normal(self):
        x = np.linspace(-8.0, 8.0, 641)
        dens = gaussian_limit_density(
            dephased_hadamard_model(np.pi / 2, 0.5), up_state(), x
        )
        ref = np.exp(-(x**2) / 2.0) / math.sqrt(2.0 * np.pi)
        assert np.max(np.abs(dens - ref)) < 1e-12

    def test_narrow_grid_rejected(self):
        x = np.linspace(-6.0, 6.0, 241)
        with pytest.raises(ValueError, match="widen"):
            gaussian_limit_density(hadamard_reflection_model(0.3), up_state(), x)

    def test_monte_carlo_agreement(self):
        # Kernel-smoothed diffusive-scaling histogram of a Monte Carlo
        # run against the same-kernel-smoothed limit density.
        model = hadamard_reflection_model(0.3)
        dist = simulate_markov(model, up_state(), 1000, 4000, seed=11)
        sigma = 0.25
        x = np.linspace(-4.0, 4.0, 321)
        dx = x[1] - x[0]
        emp = dist.smoothed_density(x, sigma, scaling="diffusive")
        xg = np.linspace(-9.0, 9.0, 2881)
        dxg = xg[1] - xg[0]
        theo = gaussian_limit_density(model, up_state(), xg)
        z = (x[:, None] - xg[None, :]) / sigma
        kern = np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * np.pi))
        theo_smooth = kern @ theo * dxg
        l1 = float(np.sum(np.abs(emp - theo_smooth)) * dx)
        assert l1 < 0.05

    def test_dephased_exact_moment_slope(self):
        # The exact second-moment recursion must grow with slope equal
        # to the momentum average of s(p) for the flat initial momentum
        # density of a localized state.
        model = dephased_hadamard_model(np.pi / 3, 0.3)
        mom = markov_exact_moments(model, up_state(), [2000, 4000], grid_points=256)
        slope = (mom["variance"][1] - mom["variance"][0]) / 2000.0
        grid = midpoint_grid(128)
        sbar = float(
            np.mean([diffusion_matrix(model, (p,))[0, 0].real for p in grid])
        )
        assert abs(slope - sbar) < 1e-8


class TestNextOrder:
    def test_cf_at_zero_frequency(self):
        model = hadamard_reflection_model(0.2)
        assert next_order_cf(model, up_state(), 0.0, 50) == pytest.approx(1.0)

    def test_reflection_mixture_closed_form_cf(self):
        # C_t(lam) = exp(-lam^2 s/(2t)) (1 + i lam/(2 eps t)) for the
        # Bernoulli reflection mixture started spin-up.
        eps = 0.2
        model = hadamard_reflection_model(eps)
        s = reflection_variance(eps)
        for lam, t in ((0.7, 50), (1.3, 200)):
            val = next_order_cf(model, up_state(), lam, t)
            ref = math.exp(-lam * lam * s / (2.0 * t)) * (1.0 + 1j * lam / (2.0 * eps * t))
            assert abs(val - ref) < 1e-12

    def test_scalar_family_bessel_cf(self):
        # Independent small-time expansion of the scalar family's exact
        # characteristic function in terms of Bessel functions:
        # C_t(lam) ~ ((8t - lam^2) J0(lam/2) - 2 lam J1(lam/2)) / (8t).
        model = scalar_kraus_model(SCALAR_COEFFS)
        psi = InitialState.localized([1.0])
        t = 10
        for lam, tol in ((0.5, 5e-6), (3.0, 5e-3)):
            val = next_order_cf(model, psi, lam, t)
            ref = ((8 * t - lam**2) * j0(lam / 2.0) - 2.0 * lam * j1(lam / 2.0)) / (8 * t)
            assert abs(val - ref) < tol

    def test_damped_density_matches_analytic_inversion(self):
        # With a hard frequency cutoff L the inverse transform of
        # exp(-lam^2 s/(2t)) (1 + i lam/(2 eps t)) e^{-lam^2/L^2} is a
        # Gaussian of variance s/t + 2/L^2 modulated by (1 + beta x).
        eps, t, cut = 0.2, 400, 12.0
        model = hadamard_reflection_model(eps)
        x = np.linspace(-0.4, 0.4, 161)
        dens = next_order_density(
            model, up_state(), x, t, cutoff=cut, lam_points=257, grid_points=512
        )
        s = reflection_variance(eps)
        var = s / t + 2.0 / cut**2
        beta = (1.0 / (2.0 * (1.0 - eps))) * (s / t) / var
        ref = np.exp(-(x**2) / (2.0 * var)) * (1.0 + beta * x)
        ref /= np.trapezoid(ref, x)
        dens = dens / np.trapezoid(dens, x)
        assert np.max(np.abs(dens - ref)) < 1e-8

    def test_tabulated_state_rejected(self):
        model = hadamard_reflection_model(0.2)
        grid = midpoint_grid(64)
        rho = np.tile((np.eye(2) / (4.0 * np.pi))[None, :, :], (64, 1, 1))
        mixed = InitialState.from_momentum_density(grid, rho)
        with pytest.raises(ValueError, match="momentum kernel"):
            next_order_cf(model, mixed, 0.5, 50)


class TestScalarVelocity:
    def test_velocity_field_and_coefficients(self):
        field = scalar_velocity(scalar_kraus_model(SCALAR_COEFFS))
        assert field.coefficients == {-1: pytest.approx(0.25), 1: pytest.approx(0.25)}
        for p in (-1.2, 0.0, 0.4, 2.8):
            assert abs(field(p) - 0.5 * math.cos(p)) < 1e-12
            assert abs(field(p) - ballistic_velocity(scalar_kraus_model(SCALAR_COEFFS), p)[0]) < 1e-10

    def test_pure_shift_has_unit_velocity(self):
        # coefficients are the Fourier modes of v(p) itself: a pure
        # right shift moves at constant speed 1, mode 0 only.
        field = scalar_velocity(scalar_kraus_model([{1: 1.0}]))
        assert field.coefficients == {0: pytest.approx(1.0)}
        for p in (-2.0, 0.3, 1.1):
            assert abs(field(p) - 1.0) < 1e-12


class TestCommutingKraus:
    def test_symmetrized_hadamard_halves_group_velocity(self):
        # K = {(1+W)/2, (1-W)/2} commutes with W; on each band the field
        # sum_j conj(k_j) (-i dk_j/dp) evaluates to half the group
        # velocity of W.
        walk = hadamard_walk()
        field = commuting_kraus_velocity(symmetrized_pair(walk), n_grid=512)
        data = group_velocity(dispersion(walk, n_grid=512))
        assert np.max(np.abs(field.axis - data.axes[0])) < 1e-12
        vf = np.sort(field.velocity, axis=1)
        vw = np.sort(data.velocity.reshape(512, 2) / 2.0, axis=1)
        assert np.max(np.abs(vf - vw)) < 1e-9

    def test_symmetrized_identity_is_static(self):
        ident = TrigPolyMatrix(1, 2, {(0,): np.eye(2)})
        field = commuting_kraus_velocity(symmetrized_pair(ident), n_grid=64)
        assert np.max(np.abs(field.velocity)) < 1e-12

    def test_weighted_shift_mixture_velocities(self):
        # sqrt(0.7) S + sqrt(0.3) U with U diagonal in the shift
        # eigenbasis: branch velocities are the eta-weighted index sums
        # 0.7*(-1) + 0.3*0 = -0.7 and 0.7*1 + 0.3*2 = 1.3.
        u2 = TrigPolyMatrix(
            1,
            2,
            {
                (2,): np.array([[1.0, 0.0], [0.0, 0.0]]),
                (0,): np.array([[0.0, 0.0], [0.0, 1.0j]]),
            },
        )
        model = MarkovWalkModel(
            ControlProcess([[1.0]]),
            [[math.sqrt(0.7) * shift_1d(), math.sqrt(0.3) * u2]],
        )
        field = commuting_kraus_velocity(model, n_grid=64)
        vf = np.sort(field.velocity, axis=1)
        assert np.max(np.abs(vf - np.array([-0.7, 1.3]))) < 1e-9

    def test_noncommuting_family_rejected(self):
        model = MarkovWalkModel(
            ControlProcess([[1.0]]),
            [[math.sqrt(0.5) * hadamard_walk(), math.sqrt(0.5) * shift_1d()]],
        )
        with pytest.raises(ValueError, match="commute"):
            commuting_kraus_velocity(model, n_grid=64)

    def test_branch_merging_rejected(self):
        # sqrt(0.7) S + sqrt(0.3) id: the joint eigenvalue vectors of the
        # two branches collide at isolated momenta while their velocities
        # differ, so no continuous eta-weighted field exists.
        ident = TrigPolyMatrix(1, 2, {(0,): np.eye(2)})
        model = MarkovWalkModel(
            ControlProcess([[1.0]]),
            [[math.sqrt(0.7) * shift_1d(), math.sqrt(0.3) * ident]],
        )
        with pytest.raises(ValueError):
            commuting_kraus_velocity(model, n_grid=64)


class TestMomentumShift:
    def test_generic_branch_gaussian(self):
        # n=1, m=32 sits on the generic branch (diffusive scaling) where
        # the variance 3/8 is momentum independent, so any initial
        # density gives the same centered Gaussian of variance 3/8.
        handle = momentum_shift_model(1, 32)
        assert handle.period == 32
        x = np.linspace(-3.0, 3.0, 241)
        asym = momentum_shift_asymptotics(handle, uniform_momentum_state(), x)
        assert asym.scaling == "diffusive"
        assert abs(asym.variance - 0.375) < 1e-12
        ref = 2.0 / math.sqrt(3.0 * np.pi) * np.exp(-4.0 * x**2 / 3.0)
        assert np.max(np.abs(asym.density - ref)) < 1e-12

    def test_half_period_branch_momentum_dependence(self):
        # n=1, m=2 (q = pi) keeps a momentum-dependent variance
        # 3/8 - cos(2p)/8; the uniform average is still 3/8 while a
        # von Mises density exp(cos 2p) shifts it by -I1(1)/(8 I0(1)).
        handle = momentum_shift_model(1, 2)
        assert handle.q == pytest.approx(np.pi)
        x = np.linspace(-3.0, 3.0, 241)
        asym = momentum_shift_asymptotics(handle, uniform_momentum_state(), x)
        assert asym.scaling == "diffusive"
        assert abs(asym.variance - 0.375) < 1e-6

        grid = midpoint_grid(256)
        weights = np.exp(np.cos(2.0 * grid))
        weights /= weights.sum() * (2.0 * np.pi / 256)
        state = InitialState.from_momentum_density(grid, weights[:, None, None])
        asym = momentum_shift_asymptotics(handle, state, x)
        exact = 3.0 / 8.0 - i1(1.0) / (8.0 * i0(1.0))
        assert abs(asym.variance - exact) < 1e-4

    def test_ballistic_branch_arcsine(self):
        # n=0, m=1 is the unperturbed ballistic branch: position/t
        # follows the arcsine-type law 2/(pi sqrt(1-4x^2)) on (-1/2, 1/2).
        handle = momentum_shift_model(0, 1)
        assert handle.q == pytest.approx(0.0)
        x = np.linspace(-0.49, 0.49, 161)
        asym = momentum_shift_asymptotics(handle, uniform_momentum_state(), x)
        assert asym.scaling == "ballistic"
        assert abs(asym.variance - 0.125) < 1e-12
        ref = 2.0 / (np.pi * np.sqrt(1.0 - 4.0 * x**2))
        assert np.max(np.abs(asym.density - ref)) < 1e-12


class TestEnsembleProperties:
    def test_eigenvalue_expansion_predicts_dense_spectrum(self):
        # For a random ensemble the second-order expansion of the branch
        # through 1 must match a dense eigendecomposition at strength
        # 1e-4 to near machine precision; drift real, diffusion PSD.
        rng = np.random.default_rng(424242)
        kept = 0
        for _ in range(8):
            model = random_walk_model(rng)
            p = rng.uniform(-np.pi, np.pi)
            try:
                report = perturbation_report(model, p)
            except (ValueError, np.linalg.LinAlgError):
                continue
            if report.gap < 0.1:
                continue
            kept += 1
            v = float(report.velocity[0])
            mupp = report.second_order[(1.0,)]
            e = 1e-4
            mu = nearest_unit_eigenvalue(
                build_transition(model, p, (1.0,), e).matrix
            )
            pred = 1.0 + 1j * e * v + e * e * mupp / 2.0
            assert abs(mu - pred) < 5e-11
            if report.unitary:
                diff = np.asarray(report.diffusion)
                assert np.max(np.abs(diff.imag)) < 1e-8
                assert np.min(np.linalg.eigvalsh(diff.real)) > -1e-10
        assert kept >= 4

    def test_gaussian_cf_identity_at_large_time(self):
        # (1 + i v lam/sqrt(t) + mu'' lam^2/(2t))^t e^{-i v lam sqrt(t)}
        # converges to the Gaussian characteristic value
        # exp((mu'' + v^2) lam^2 / 2).
        report = perturbation_report(hadamard_reflection_model(0.3), 1.1)
        v = float(report.velocity[0])
        mupp = complex(report.second_order[(1.0,)])
        lam, t = 0.8, 10**6
        lhs = (1.0 + 1j * v * lam / math.sqrt(t) + mupp * lam**2 / (2.0 * t)) ** t
        lhs *= np.exp(-1j * v * lam * math.sqrt(t))
        rhs = np.exp((mupp + v * v) * lam**2 / 2.0)
        assert abs(lhs - rhs) < 1e-4
