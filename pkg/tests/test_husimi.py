import math

import numpy as np
import pytest
from scipy.integrate import quad

from fermigas.errors import GridResolutionError, HypothesisViolationError, ValidationError
from fermigas.model import SpatialGrid, TFConstants, bump_profile, plateau_profile, scaled_interaction
from fermigas.husimi import (
    CoherentFamily,
    OneBodyOperator,
    coherent_state,
    envelope,
    envelope_gradient_norm_sq,
    frame_apply,
    gamma_from_measure,
    hartree_energy,
    husimi,
    husimi_grid_table,
    lowest_orbitals,
    marginal_identity_report,
    semiclassical_error_decomposition,
    slater_operator,
    smearing_errors,
)
from fermigas.tf_solver import RelaxedLocalEnergy, minimize_1d_relaxed, sample_minimizer
from fermigas.vlasov import bathtub_lift, brillouin_momentum_grid, vlasov_energy

N_PARTICLES = 8
BETA = 0.2


@pytest.fixture(scope="module")
def setup():
    grid = SpatialGrid(1, 2.2, 256)
    from fermigas.model import harmonic_potential

    potential = harmonic_potential(1)
    family = CoherentFamily(N_PARTICLES, 0.12, (1.0 / N_PARTICLES) ** 2 / 0.12)
    orbitals = lowest_orbitals(grid, potential, N_PARTICLES, family.hbar)
    gamma = slater_operator(orbitals, grid)
    return grid, potential, family, gamma


class TestEnvelope:
    def test_unit_l2_norm_independent_quadrature(self):
        val, _ = quad(lambda u: envelope(np.array([u]))[0] ** 2, -1.0, 1.0, limit=200)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_gradient_norm_matches_quadrature(self):
        # independent finite-difference route on a fresh mesh
        u = np.linspace(-1.0, 1.0, 400001)
        f = envelope(u)
        grad = np.gradient(f, u)
        fd = float(np.trapezoid(grad**2, u))
        assert envelope_gradient_norm_sq() == pytest.approx(fd, rel=1e-5)


class TestCoherentFamily:
    def test_default_split(self):
        fam = CoherentFamily.default(8, BETA)
        assert fam.hbar == pytest.approx(1.0 / 8.0, abs=0)
        assert fam.hbar_x == pytest.approx(8.0 ** (-BETA - 1.0), rel=1e-14)
        assert fam.hbar_p == pytest.approx(8.0 ** (BETA - 1.0), rel=1e-12)
        assert fam.hbar_x * fam.hbar_p == pytest.approx(fam.hbar**2, rel=1e-12)

    def test_rejects_inconsistent_scales(self):
        with pytest.raises(ValidationError):
            CoherentFamily(8, 0.1, 0.1)


class TestCoherentState:
    def test_zero_momentum_real_nonnegative(self, setup):
        grid, _, family, _ = setup
        f = coherent_state(0.3, 0.0, family, grid)
        assert np.allclose(f.imag, 0.0)
        assert np.all(f.real >= 0.0)

    def test_unit_norm_random_centers(self, setup, rng):
        grid, _, family, _ = setup
        for _ in range(10):
            x = rng.uniform(-1.0, 1.0)
            p = rng.uniform(-3.0, 3.0)
            f = coherent_state(x, p, family, grid)
            assert abs(grid.integrate(np.abs(f) ** 2) - 1.0) <= 1e-6

    def test_under_resolved_grid_rejected(self):
        fam = CoherentFamily(64, 64.0**-1.3, 64.0**-2.0 / 64.0**-1.3)
        with pytest.raises(GridResolutionError):
            coherent_state(0.0, 0.0, fam, SpatialGrid(1, 2.0, 32))


class TestResolutionOfIdentity:
    def test_frame_reproduces_identity(self, setup, rng):
        grid, _, family, _ = setup
        target = 2.0 * math.pi * family.hbar
        y = grid.axis()
        for _ in range(20):
            psi = (rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)) * np.exp(
                -2.0 * y**2
            )
            out = frame_apply(psi, family, grid)
            rel = np.linalg.norm(out - target * psi) / (target * np.linalg.norm(psi))
            assert rel <= 1e-3


class TestHusimiTables:
    def test_zero_operator(self, setup):
        grid, _, family, _ = setup
        table = husimi_grid_table(OneBodyOperator(grid, np.zeros((grid.size, grid.size))), family)
        assert not np.any(table.values)

    def test_trace_identity(self, setup):
        grid, _, family, gamma = setup
        momentum = brillouin_momentum_grid(grid, family.hbar)
        table = husimi_grid_table(gamma, family, momentum)
        normalized = table.phase_space_integral(grid, momentum) / (2 * math.pi * family.hbar)
        assert normalized / N_PARTICLES == pytest.approx(1.0, abs=1e-3)

    def test_pauli_bound(self, setup):
        _, _, family, gamma = setup
        table = husimi_grid_table(gamma, family)
        assert table.values.min() >= 0.0
        assert table.values.max() <= 1.0 + 1e-6

    def test_marginal_identities(self, setup):
        _, _, family, gamma = setup
        report = marginal_identity_report(gamma, family)
        assert report["space_l1_gap"] <= 1e-4
        assert report["momentum_l1_gap"] <= 1e-4

    def test_k2_slater_vanishes_on_diagonal(self, setup, rng):
        _, _, family, gamma = setup
        zs = np.column_stack(
            [rng.uniform(-1, 1, 5), rng.uniform(-2, 2, 5), np.zeros(5), np.zeros(5)]
        )
        zs[:, 2] = zs[:, 0]
        zs[:, 3] = zs[:, 1]
        vals = husimi(gamma, family, k=2, samples=zs)
        assert np.all(np.abs(vals) <= 1e-10)

    def test_k2_slater_positive_off_diagonal(self, setup):
        _, _, family, gamma = setup
        vals = husimi(gamma, family, k=2, samples=np.array([[-0.8, 0.5, 0.8, -0.5]]))
        assert vals[0] > 0.0


@pytest.fixture(scope="module")
def tf_lift(setup):
    grid, potential, family, _ = setup
    constants = TFConstants.bathtub_consistent(1)
    rel = RelaxedLocalEnergy(constants.c_tf, 1.0)
    fine = minimize_1d_relaxed(potential, rel, grid.refine(8), tol=1e-3)
    rho = sample_minimizer(potential, rel, grid, fine.lam)
    momentum = brillouin_momentum_grid(grid, family.hbar)
    return bathtub_lift(rho, constants, momentum), fine


class TestGammaFromMeasure:

    def test_zero_measure(self, setup):
        grid, _, family, _ = setup
        momentum = brillouin_momentum_grid(grid, family.hbar)
        from fermigas.vlasov import PhaseSpaceDensity

        zero = PhaseSpaceDensity(grid, momentum, np.zeros((grid.size, momentum.size)))
        gamma = gamma_from_measure(zero, family)
        assert not np.any(gamma.matrix)

    def test_trace_and_occupations(self, setup, tf_lift):
        _, _, family, _ = setup
        lift, _ = tf_lift
        gamma = gamma_from_measure(lift, family)
        assert gamma.trace == pytest.approx(N_PARTICLES, abs=0.1)
        occ = gamma.occupations()
        assert occ.min() >= -1e-6
        assert occ.max() <= 1.0 + 1e-6

    def test_rejects_pauli_violation(self, setup, tf_lift):
        grid, _, family, _ = setup
        lift, _ = tf_lift
        from fermigas.vlasov import PhaseSpaceDensity

        doubled = PhaseSpaceDensity(grid, lift.momentum, 2.0 * lift.values)
        with pytest.raises(HypothesisViolationError, match="0 <= m <= 1"):
            gamma_from_measure(doubled, family, mass_rtol=2.0)

    def test_rejects_mass_defect(self, setup, tf_lift):
        grid, _, family, _ = setup
        lift, _ = tf_lift
        from fermigas.vlasov import PhaseSpaceDensity

        halved = PhaseSpaceDensity(grid, lift.momentum, 0.5 * lift.values)
        with pytest.raises(HypothesisViolationError, match="mass"):
            gamma_from_measure(halved, family)

    def test_rejects_support_touching_edge(self, setup):
        grid, _, family, _ = setup
        momentum = brillouin_momentum_grid(grid, family.hbar)
        values = np.zeros((grid.size, momentum.size))
        # occupy one momentum cell everywhere, including the box edge
        k = momentum.size // 2
        dp = momentum.cell_volume
        values[:, k] = 2.0 * math.pi / (dp * 2 * grid.half_width)
        values = np.clip(values, 0.0, 1.0)
        # rescale to unit phase-space mass using a wide band instead
        need = (2.0 * math.pi) / (grid.cell_volume * dp * grid.size)
        width = int(math.ceil(need))
        values[:, k - width // 2 : k - width // 2 + width] = 1.0
        from fermigas.vlasov import PhaseSpaceDensity

        m = PhaseSpaceDensity(grid, momentum, values)
        with pytest.raises(HypothesisViolationError, match="edge"):
            gamma_from_measure(m, family, mass_rtol=0.5)


class TestHartree:
    def test_zero_operator(self, setup):
        grid, potential, _, _ = setup
        gamma = OneBodyOperator(grid, np.zeros((grid.size, grid.size)))
        out = hartree_energy(gamma, potential, None, 8)
        assert out["total"] == 0.0

    def test_exchange_trace_bound(self, setup, rng):
        # tr(gamma x gamma Ex) = tr(gamma^2) <= tr(gamma) for 0 <= gamma <= 1
        grid, _, _, _ = setup
        for _ in range(10):
            k = 24
            basis, _ = np.linalg.qr(rng.standard_normal((grid.size, k)))
            occ = rng.uniform(0.0, 1.0, k)
            gamma = basis @ np.diag(occ) @ basis.T
            tr2 = float(np.trace(gamma @ gamma))
            tr1 = float(np.trace(gamma))
            assert 0.0 <= tr2 <= tr1 + 1e-10

    def test_hartree_tracks_n_vlasov_energy(self, harmonic_1d):
        # |E^H[gamma^h]/N - E^V_N[m]| shrinks along N = 8, 16, 32
        constants = TFConstants.bathtub_consistent(1)
        profile = bump_profile(1, beta=BETA, radius=1.0, height=1.0)
        grid = SpatialGrid(1, 2.2, 256)
        rel = RelaxedLocalEnergy(constants.c_tf, profile.i_w)
        fine = minimize_1d_relaxed(harmonic_1d, rel, grid.refine(8), tol=1e-3)
        rho = sample_minimizer(harmonic_1d, rel, grid, fine.lam)
        gaps = []
        for n in (8, 16, 32):
            family = CoherentFamily.default(n, BETA)
            momentum = brillouin_momentum_grid(grid, family.hbar)
            lift = bathtub_lift(rho, constants, momentum)
            gamma = gamma_from_measure(lift, family)
            w_n = scaled_interaction(profile, n)
            e_h = hartree_energy(gamma, harmonic_1d, w_n, n)["total"]
            e_v = vlasov_energy(lift, harmonic_1d, profile.i_w, w_n=w_n).total
            gaps.append(abs(e_h / n - e_v))
        assert gaps[0] > gaps[1] > gaps[2]


class TestErrorDecomposition:
    def test_kinetic_correction_identity(self, setup):
        grid, potential, family, _ = setup
        orbitals = lowest_orbitals(grid, potential, 5, family.hbar)
        fam5 = CoherentFamily(5, family.hbar_x, (1.0 / 5.0) ** 2 / family.hbar_x)
        gamma = slater_operator(orbitals, grid)
        report = semiclassical_error_decomposition(gamma, fam5, potential)
        assert abs(report.measured_correction - report.expected_correction) <= 1e-4

    def test_smearing_single_bound_constant_stable(self):
        profile = plateau_profile(beta=0.25, radius=0.5, edge_width=1e-3, height=1.0)
        w_n = scaled_interaction(profile, 4)
        records = smearing_errors(w_n.evaluate, w_n.support_radius, [1e-2, 1e-3, 1e-4])
        ratios = [r["ratio_single"] for r in records]
        assert max(ratios) / min(ratios) <= 2.0

    def test_potential_gap_reported(self, setup):
        grid, potential, family, gamma = setup
        report = semiclassical_error_decomposition(gamma, family, potential)
        assert report.potential_gap >= 0.0
        assert report.potential_gap <= 5.0 * report.potential_gap_scale * N_PARTICLES


@pytest.fixture(scope="module")
def tiny_state():
    from fermigas.model import harmonic_potential
    from fermigas.oracle import DiscreteHamiltonian, ground_state

    grid = SpatialGrid(1, 2.5, 40)
    ham = DiscreteHamiltonian(grid, harmonic_potential(1), 2)
    _, state = ground_state(ham)
    return grid, state


class TestStateHusimi:

    def test_free_ground_state_matches_wick_route(self, tiny_state):
        # a free-fermion ground state is a Slater determinant: the
        # annihilation route and the Wick rule must agree for k = 2
        from fermigas.oracle import reduced_densities

        grid, state = tiny_state
        family = CoherentFamily(2, 0.3, 0.25 / 0.3)
        red = reduced_densities(state)
        gamma = OneBodyOperator(grid, red.gamma1)
        samples = np.array(
            [[-0.5, 0.4, 0.6, -0.3], [0.0, 1.0, 0.2, -1.0], [0.3, 0.0, -0.3, 0.0]]
        )
        direct = husimi(state, family, k=2, samples=samples)
        wick = husimi(gamma, family, k=2, samples=samples)
        assert direct == pytest.approx(wick, rel=1e-8, abs=1e-12)

    def test_k_exceeding_n_rejected(self, tiny_state):
        _, state = tiny_state
        family = CoherentFamily(2, 0.3, 0.25 / 0.3)
        with pytest.raises(ValidationError, match="exceeds"):
            husimi(state, family, k=3, samples=np.zeros((1, 6)))
