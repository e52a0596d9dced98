import numpy as np
import pytest

from multiphase import (Domain2D, ExponentTriple, FluxParams, PhaseProblem,
                        SourceTerm, UNIT_SQUARE, WeightPair, check_h2,
                        check_h3, first_eigenvalue, interpolate, solve_convection,
                        solve_variational, structured_mesh,
                        verify_uniqueness_empirical, weak_residual_sup)
from multiphase.modular import PhaseFunction

TWO_PI_SQ = 2 * np.pi ** 2


def dirichlet_zero(mesh):
    return np.zeros(mesh.n_vertices)


def sine_load():
    return SourceTerm.of_x(
        lambda x, y: TWO_PI_SQ * np.sin(np.pi * x) * np.sin(np.pi * y))


class TestVariationalLaplace:
    def test_manufactured_convergence(self, laplace_flux):
        errs = []
        for n in (8, 16, 32):
            mesh = structured_mesh(UNIT_SQUARE, n)
            prob = PhaseProblem(mesh, laplace_flux, sine_load(),
                                dirichlet_zero(mesh))
            rep = solve_variational(prob, tol=1e-12)
            assert rep.converged
            exact = interpolate(
                lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y), mesh)
            errs.append(np.max(np.abs(rep.solution.nodal_values
                                      - exact.nodal_values)))
        assert errs[1] / errs[2] > 3.0
        assert errs[0] / errs[1] > 3.0

    def test_zero_load_zero_solution(self, laplace_flux, square8):
        prob = PhaseProblem(square8, laplace_flux, SourceTerm.zero(),
                            dirichlet_zero(square8))
        rep = solve_variational(prob)
        assert rep.converged
        assert np.max(np.abs(rep.solution.nodal_values)) == 0.0

    def test_dirichlet_lift(self, laplace_flux, square8):
        g = interpolate(lambda x, y: 1 + 2 * x - y, square8)
        prob = PhaseProblem(square8, laplace_flux, SourceTerm.zero(),
                            g.nodal_values)
        rep = solve_variational(prob, tol=1e-12)
        # affine data is harmonic: the P1 interpolant is the exact solution
        assert np.allclose(rep.solution.nodal_values, g.nodal_values,
                           atol=1e-10)

    def test_maximum_principle(self, laplace_flux, square16):
        f = SourceTerm.of_x(lambda x, y: np.ones(np.shape(x)))
        prob = PhaseProblem(square16, laplace_flux, f, dirichlet_zero(square16))
        rep = solve_variational(prob)
        assert np.all(rep.solution.nodal_values >= -1e-12)

    def test_grad_dependent_rejected(self, laplace_flux, square8):
        f = SourceTerm(lambda x1, x2, t, z1, z2: z1, grad_dependent=True)
        prob = PhaseProblem(square8, laplace_flux, f, dirichlet_zero(square8))
        with pytest.raises(ValueError, match="gradient-independent"):
            solve_variational(prob)


class TestVariationalNonlinear:
    def test_p3_radial_disk(self):
        """Radial p-Laplace benchmark on the unit disk, p = 3."""
        p = 3.0
        const = (p - 1) / p * 0.5 ** (1 / (p - 1))
        exact = lambda rho: const * (1 - rho ** (p / (p - 1)))
        fp = FluxParams(PhaseFunction(ExponentTriple.constants(3, 3, 3),
                                      WeightPair.constants(0, 0)), eps=1e-8)
        errs = []
        for n_vert, n in ((16, 4), (32, 8), (64, 16)):
            th = np.linspace(0, 2 * np.pi, n_vert, endpoint=False)
            disk = Domain2D(tuple(zip(np.cos(th), np.sin(th))))
            mesh = structured_mesh(disk, n)
            prob = PhaseProblem(mesh, fp, SourceTerm.of_x(
                lambda x, y: np.ones(np.shape(x))), dirichlet_zero(mesh))
            rep = solve_variational(prob, tol=1e-10)
            assert rep.converged
            rho = np.linalg.norm(mesh.vertices, axis=1)
            interior = ~mesh.boundary_flags
            err = np.max(np.abs(rep.solution.nodal_values[interior]
                                - exact(rho[interior])))
            errs.append(err)
        assert errs[0] > errs[1] > errs[2]

    def test_triple_phase_converges(self, triple_flux, square16):
        prob = PhaseProblem(square16, triple_flux, sine_load(),
                            dirichlet_zero(square16))
        rep = solve_variational(prob, tol=1e-10)
        assert rep.converged
        assert rep.residual_history[-1] <= 1e-10
        assert np.max(np.abs(rep.solution.nodal_values)) > 0.1

    def test_energy_monotone_history(self, triple_flux, square16):
        prob = PhaseProblem(square16, triple_flux, sine_load(),
                            dirichlet_zero(square16))
        rep = solve_variational(prob, tol=1e-10)
        e = rep.energy_history
        assert e[-1] <= e[0] + 1e-12

    def test_weak_residual_matches(self, triple_flux, square16):
        prob = PhaseProblem(square16, triple_flux, sine_load(),
                            dirichlet_zero(square16))
        rep = solve_variational(prob, tol=1e-10)
        assert weak_residual_sup(prob, rep.solution) <= 1e-10


class TestConvection:
    def make_problem(self, mesh, fp, k3=0.05, k4=0.05):
        f = SourceTerm(
            lambda x1, x2, t, z1, z2:
                np.sin(np.pi * x1) * np.sin(np.pi * x2)
                + k3 * z1 + k4 * t,
            grad_dependent=True, constants={"k3": k3, "k4": k4,
                                            "k5": k3, "k6": k4})
        return PhaseProblem(mesh, fp, f, dirichlet_zero(mesh))

    def test_converges_small_coupling(self, triple_flux, square16):
        prob = self.make_problem(square16, triple_flux)
        rep = solve_convection(prob, tol=1e-10)
        assert rep.converged
        assert weak_residual_sup(prob, rep.solution) <= 1e-8
        assert np.max(np.abs(rep.solution.nodal_values)) > 0

    def test_matches_variational_when_uncoupled(self, triple_flux, square16):
        prob_c = self.make_problem(square16, triple_flux, k3=0.0, k4=0.0)
        prob_v = PhaseProblem(square16, triple_flux, SourceTerm.of_x(
            lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)),
            dirichlet_zero(square16))
        rc = solve_convection(prob_c, tol=1e-11)
        rv = solve_variational(prob_v, tol=1e-11)
        assert np.max(np.abs(rc.solution.nodal_values
                             - rv.solution.nodal_values)) <= 1e-9

    def test_uniqueness_multistart(self, triple_flux, square8):
        prob = self.make_problem(square8, triple_flux)
        dist = verify_uniqueness_empirical(prob, 3, tol=1e-10)
        assert dist <= 1e-9

    def test_too_few_starts(self, triple_flux, square8):
        prob = self.make_problem(square8, triple_flux)
        with pytest.raises(ValueError):
            verify_uniqueness_empirical(prob, 1)


class TestEigenvalue:
    def test_m2_unit_square(self):
        mesh = structured_mesh(UNIT_SQUARE, 32)
        lam, ef = first_eigenvalue(mesh, 2.0)
        assert lam == pytest.approx(TWO_PI_SQ, rel=5e-3)
        assert lam >= TWO_PI_SQ  # Galerkin upper bound
        assert np.all(ef.nodal_values[mesh.boundary_flags] == 0)

    def test_m2_refinement_monotone(self):
        lams = [first_eigenvalue(structured_mesh(UNIT_SQUARE, n), 2.0)[0]
                for n in (8, 16, 32)]
        assert lams[0] > lams[1] > lams[2] > TWO_PI_SQ

    def test_eigenfunction_sign(self):
        mesh = structured_mesh(UNIT_SQUARE, 16)
        _, ef = first_eigenvalue(mesh, 2.0)
        interior = ef.nodal_values[~mesh.boundary_flags]
        assert np.all(interior > 0) or np.all(interior < 0)

    def test_m3_above_zero(self):
        mesh = structured_mesh(UNIT_SQUARE, 12)
        lam, _ = first_eigenvalue(mesh, 3.0)
        assert lam > 0

    def test_m3_descent_improves_m2_start(self):
        mesh = structured_mesh(UNIT_SQUARE, 12)
        lam2, ef2 = first_eigenvalue(mesh, 2.0)
        lam3, _ = first_eigenvalue(mesh, 3.0)
        from multiphase.solver import (PhaseDiscretization, FluxParams,
                                       _m_power_quantities)
        fp = FluxParams(PhaseFunction(ExponentTriple.constants(3, 3, 3),
                                      WeightPair.constants(0, 0)), eps=1e-10)
        disc = PhaseDiscretization(fp, mesh)
        N, D, _, _ = _m_power_quantities(disc, mesh, 3.0, ef2.nodal_values)
        assert lam3 <= N / D + 1e-10

    def test_invalid_m(self, square8):
        with pytest.raises(ValueError):
            first_eigenvalue(square8, 1.0)


class TestH2H3:
    def test_h2_pass(self):
        src = SourceTerm.zero()
        src.constants.update(k3=0.2, k4=1.0)
        rep = check_h2(src, 19.7)
        assert rep.passed
        assert rep.margin == pytest.approx(1 - 0.2 - 1.0 / 19.7)

    def test_h2_fail(self):
        src = SourceTerm.zero()
        src.constants.update(k3=1.5, k4=0.0)
        assert not check_h2(src, 19.7).passed

    def test_h2_bad_lambda(self):
        with pytest.raises(ValueError):
            check_h2(SourceTerm.zero(), 0.0)

    def test_h3_margins(self):
        src = SourceTerm.zero()
        src.constants.update(k5=1.0, k6=1.0)
        rep = check_h3(src, 19.7)
        assert rep.passed
        assert rep.margin == pytest.approx(1 - 1 / 19.7 - 1 / np.sqrt(19.7))

    def test_h3_fail(self):
        src = SourceTerm.zero()
        src.constants.update(k5=50.0, k6=0.0)
        assert not check_h3(src, 19.7).passed
