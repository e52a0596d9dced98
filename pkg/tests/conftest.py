import numpy as np
import pytest

from multiphase import (ExponentTriple, FluxParams, ScalarField, UNIT_SQUARE,
                        WeightPair, structured_mesh)
from multiphase.modular import PhaseFunction


@pytest.fixture(scope="session")
def square8():
    return structured_mesh(UNIT_SQUARE, 8)


@pytest.fixture(scope="session")
def square16():
    return structured_mesh(UNIT_SQUARE, 16)


@pytest.fixture(scope="session")
def square32():
    return structured_mesh(UNIT_SQUARE, 32)


@pytest.fixture(scope="session")
def laplace_phase():
    """p = q = r = 2 with no weights: the plain Laplacian."""
    return PhaseFunction(ExponentTriple.constants(2, 2, 2),
                        WeightPair.constants(0, 0))


@pytest.fixture(scope="session")
def triple_phase():
    """Constant-exponent three-term phase: p=2, q=3, r=4, both weights 1."""
    return PhaseFunction(ExponentTriple.constants(2, 3, 4),
                        WeightPair.constants(1, 1))


@pytest.fixture(scope="session")
def variable_phase():
    """Spatially varying exponents and one-sided weight activation."""
    exp = ExponentTriple.sample(ScalarField.affine(2.0, 0.2, 0.0),
                                ScalarField.affine(2.3, 0.2, 0.1),
                                ScalarField.affine(2.6, 0.2, 0.2),
                                UNIT_SQUARE)
    w = WeightPair.sample(ScalarField.expression("max(0, x1 - 0.5)"),
                          ScalarField.constant(0.25), UNIT_SQUARE)
    return PhaseFunction(exp, w)


@pytest.fixture(scope="session")
def laplace_flux(laplace_phase):
    return FluxParams(laplace_phase, eps=0.0)


@pytest.fixture(scope="session")
def triple_flux(triple_phase):
    return FluxParams(triple_phase, eps=0.0)


def random_fe(mesh, rng, zero_boundary=True, scale=1.0):
    vals = rng.uniform(-scale, scale, mesh.n_vertices)
    if zero_boundary:
        vals[mesh.boundary_flags] = 0.0
    from multiphase import FeFunction
    return FeFunction(mesh, vals)
