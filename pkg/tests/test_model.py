import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llg import ModelParams, assemble, energy, exact, generate_structured, interpolate, lower_order_field
from llg.analytic import ExactParams
from llg.model import check_unit

from conftest import random_unit_field

MESH = generate_structured(8)
OPS = assemble(MESH)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(theta=1.5)
    with pytest.raises(ValueError):
        ModelParams(eta=0.0)
    with pytest.raises(ValueError):
        ModelParams(Q=-1.0)
    with pytest.raises(ValueError):
        ModelParams(h_e=(1.0, 2.0))
    assert ModelParams(k=8e-5 / 32**2, T_bar=1e-3).steps == 12800
    assert ModelParams(k=0.00256 / 32**2, T_bar=1e-3).steps == 400
    assert ModelParams(k=2e-3, T_bar=1e-3).steps == 0


def test_check_unit():
    check_unit(np.tile([0.0, 0.6, 0.8], (3, 1)))
    with pytest.raises(ValueError):
        check_unit(np.tile([0.0, 0.6, 0.9], (3, 1)))


def test_lower_order_field_cases(rng):
    w = rng.standard_normal((5, 3))
    assert np.array_equal(lower_order_field(w, ModelParams()), np.zeros_like(w))
    e2 = np.tile([0.0, 1.0, 0.0], (5, 1))
    assert np.array_equal(lower_order_field(e2, ModelParams(Q=1.0)), -e2)
    out = lower_order_field(w, ModelParams(h_e=(0, 0, 1)), include_constant=True)
    assert np.array_equal(out, np.tile([0.0, 0.0, 1.0], (5, 1)))
    assert np.array_equal(lower_order_field(w, ModelParams(h_e=(0, 0, 1)), include_constant=False), 0 * w)


def test_energy_trivial_values():
    e1 = np.tile([1.0, 0.0, 0.0], (OPS.N, 1))
    e2 = np.tile([0.0, 1.0, 0.0], (OPS.N, 1))
    assert abs(energy(e1, OPS, ModelParams(Q=1.0))) <= 1e-12
    assert energy(e2, OPS, ModelParams(eta=1.0, Q=1.0)) == pytest.approx(0.5, abs=1e-14)
    # external field term is -h_e . integral m
    assert energy(e1, OPS, ModelParams(h_e=(2.0, 0, 0))) == pytest.approx(-2.0, abs=1e-14)


def test_energy_shape_mismatch():
    with pytest.raises(ValueError):
        energy(np.zeros((3, 3)), OPS, ModelParams())


def continuum_exchange_energy(beta, kappa, n=64):
    """(1/2) integral |grad m|^2 by Gauss-Legendre quadrature and central differences."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1), 0.5 * w
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    p = ExactParams(beta=beta, kappa=kappa)
    d = 1e-5
    pts = np.stack([X, Y], axis=-1)
    total = 0.0
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = d
        g = (exact(pts + step, 0.0, p) - exact(pts - step, 0.0, p)) / (2 * d)
        total += float((W * (g**2).sum(axis=-1)).sum())
    return 0.5 * total


def test_exchange_energy_of_interpolated_exact_solution():
    beta = math.pi / 24
    analytic = 4 * math.pi**2 * math.sin(beta) ** 2
    assert continuum_exchange_energy(beta, 2 * math.pi) == pytest.approx(analytic, rel=1e-8)
    mesh = generate_structured(64)
    ops = assemble(mesh)
    m0 = interpolate(lambda x: exact(x, 0.0), mesh)
    E = energy(m0, ops, ModelParams(eta=1.0))
    assert abs(E - analytic) / analytic < 0.01


def rotation_about_e1(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    phi=st.floats(0, 2 * math.pi),
    Q=st.floats(0, 5),
    h1=st.floats(-3, 3),
)
def test_energy_invariant_under_rotation_about_easy_axis(seed, phi, Q, h1):
    m = random_unit_field(np.random.default_rng(seed), OPS.N)
    params = ModelParams(Q=Q, h_e=(h1, 0.0, 0.0), eta=1.3)
    rotated = m @ rotation_about_e1(phi).T
    a, b = energy(m, OPS, params), energy(rotated, OPS, params)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_exchange_energy_nonnegative(seed):
    m = random_unit_field(np.random.default_rng(seed), OPS.N)
    assert energy(m, OPS, ModelParams()) > 0


def test_exchange_energy_zero_for_constant():
    c = np.tile([0.0, 0.6, 0.8], (OPS.N, 1))
    assert abs(energy(c, OPS, ModelParams())) <= 1e-12
