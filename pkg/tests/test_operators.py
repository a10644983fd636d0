import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoskit.crn import ReactionNetwork, parse_network
from chaoskit.field import analytic_profile
from chaoskit.kernels import eval_kernel
from chaoskit.meanfield import logistic_special
from chaoskit.operators import (DiscreteStateSpace, adjoint_residual, apply_jump_adjoint,
                                apply_jump_generator, dynkin_residual, dynkin_samples,
                                exchangeability_defect, extrapolate, generator_matrix,
                                laplacian_matrix, mean_ci, permutation_defect, symmetrize,
                                transpose_particles)
from chaoskit.particle import DiffusionSpec

from conftest import CORPUS

SPECIAL = parse_network(CORPUS["special_tophat"])
REVERSIBLE = parse_network(CORPUS["reversible"])


def test_state_count_and_cap():
    sp = DiscreteStateSpace(8, 3, 3)
    assert sp.P == 24 and sp.size == 24**3
    with pytest.raises(ValueError):
        DiscreteStateSpace(40, 4, 3)
    with pytest.raises(ValueError):
        apply_jump_generator(sp, REVERSIBLE, np.zeros(10))


def test_position_only_observable_is_annihilated():
    sp = DiscreteStateSpace(8, 2, 3)
    cell, _ = sp.single()
    g = np.cos(2 * np.pi * cell / 8)
    phi = g[:, None] + 3 * g[None, :] ** 2
    assert np.all(apply_jump_generator(sp, REVERSIBLE, phi) == 0)


def test_indicator_example_by_hand():
    sp = DiscreteStateSpace(8, 2, 2)
    cell, spec = sp.single()
    phi = ((spec[:, None] == 2) & (spec[None, :] == 2)).astype(float)
    out = apply_jump_generator(sp, SPECIAL, phi)
    for a in range(8):
        for b in range(8):
            ya, yb = a, 8 + b  # particle 1 of type 1 in cell a, particle 2 of type 2 in cell b
            expected = 0.5 * eval_kernel(SPECIAL.kernel(SPECIAL.reactions[0]), [(a - b) / 8])
            assert out[ya, yb] == expected
            # with the labels swapped the active ordered pair is (j, i), same value
            assert out[yb, ya] == expected
            # two type-2 particles: no reaction can fire
            assert out[8 + a, 8 + b] == 0


@pytest.mark.parametrize("N", [2, 3])
def test_linearity(N):
    sp = DiscreteStateSpace(4, N, 3)
    rng = np.random.default_rng(0)
    phi = rng.integers(-4, 5, sp.shape).astype(float)
    psi = rng.integers(-4, 5, sp.shape).astype(float)
    net = parse_network("kernel k = constant(rate=2)\nS1 + S2 -> S3 + S3 @ k\nS3 + S3 -> S1 + S2 @ k")
    for op in (apply_jump_generator, apply_jump_adjoint):
        lhs = op(sp, net, 2 * phi - 0.5 * psi)
        rhs = 2 * op(sp, net, phi) - 0.5 * op(sp, net, psi)
        if N == 2:
            # integer data and a power-of-two normalization: every operation is exact
            assert np.array_equal(lhs, rhs)
        else:
            assert np.max(np.abs(lhs - rhs)) <= 1e-13


@pytest.mark.parametrize("N", [2, 3])
@pytest.mark.parametrize("name", sorted(CORPUS))
def test_adjoint_duality(N, name):
    net = parse_network(CORPUS[name])
    sp = DiscreteStateSpace(4 if N == 3 else 8, N, net.n_species)
    rng = np.random.default_rng(N)
    worst = max(adjoint_residual(sp, net, *sp.random(rng, 2)) for _ in range(100 if N == 2 else 10))
    assert worst <= 1e-12


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_adjoint_conserves_mass(name):
    net = parse_network(CORPUS[name])
    sp = DiscreteStateSpace(6, 3, net.n_species)
    psi = sp.random(np.random.default_rng(1))[0]
    assert abs(sp.vol * apply_jump_adjoint(sp, net, psi).sum()) <= 1e-12


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_matrix_route_agrees(name):
    net = parse_network(CORPUS[name])
    sp = DiscreteStateSpace(4, 3, net.n_species)
    G = generator_matrix(sp, net)
    phi, psi = sp.random(np.random.default_rng(2), 2)
    assert np.allclose((G @ phi.ravel()).reshape(sp.shape), apply_jump_generator(sp, net, phi),
                       rtol=0, atol=1e-12)
    assert np.allclose((G.T @ psi.ravel()).reshape(sp.shape), apply_jump_adjoint(sp, net, psi),
                       rtol=0, atol=1e-12)
    assert np.max(np.abs(G.sum(axis=1))) <= 1e-13
    off = G - G.multiply(np.eye(sp.size) != 0) if sp.size < 5000 else None
    if off is not None:
        assert off.min() >= 0


def test_rate_matrix_offdiagonals_nonnegative():
    sp = DiscreteStateSpace(4, 2, 3)
    G = generator_matrix(sp, REVERSIBLE).toarray()
    np.fill_diagonal(G, 0)
    assert G.min() >= 0
    assert np.max(np.abs(generator_matrix(sp, REVERSIBLE).T.sum(axis=0))) <= 1e-13


def test_empty_network_matrix():
    sp = DiscreteStateSpace(4, 2, 2)
    assert generator_matrix(sp, ReactionNetwork(2, (), {})).nnz == 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(sorted(CORPUS)))
def test_permutation_commutes_exactly(seed, name):
    net = parse_network(CORPUS[name])
    sp = DiscreteStateSpace(4, 3, net.n_species)
    psi = sp.random(np.random.default_rng(seed))[0]
    assert permutation_defect(sp, net, psi) == 0.0


def test_transpose_is_involution():
    sp = DiscreteStateSpace(3, 3, 2)
    v = sp.random(np.random.default_rng(0))[0]
    assert np.array_equal(transpose_particles(sp, transpose_particles(sp, v, 0, 2), 0, 2), v)
    s = symmetrize(sp, v)
    assert np.allclose(transpose_particles(sp, s, 0, 1), s, atol=1e-15)


@pytest.mark.parametrize("N", [2, 3])
def test_exchangeability_preserved(N):
    sp = DiscreteStateSpace(4, N, 3)
    rng = np.random.default_rng(N)
    psi0 = symmetrize(sp, np.abs(sp.random(rng)[0]))
    psi0 /= sp.vol * psi0.sum()
    assert exchangeability_defect(sp, REVERSIBLE, psi0, 0.5) <= 1e-12


def test_laplacian():
    for d in (1, 2):
        L = laplacian_matrix(8, d)
        assert abs(L - L.T).max() == 0
        assert np.allclose(L @ np.ones(8**d), 0)
    x = np.arange(8) / 8
    L = laplacian_matrix(8)
    expected = 64 * (2 * math.cos(2 * math.pi / 8) - 2)
    assert np.allclose(L @ np.cos(2 * np.pi * x), expected * np.cos(2 * np.pi * x))


# Dynkin residuals

def _const(pos, types):
    return np.ones(len(types))


def _zero(pos, types):
    return np.zeros(len(types))


def test_dynkin_constant_observable_exact():
    rho = analytic_profile("uniform", (0.5, 0.5), 8)
    res, _, _ = dynkin_samples(SPECIAL, DiffusionSpec((0.3,)), rho, 32, _const, _zero, 0.05, 0.01, 20)
    assert np.all(res == 0)


def test_dynkin_heat():
    net = ReactionNetwork(1, (), {}, ("S1",))
    sigma, t = 0.5, 0.1
    rho = analytic_profile("cosine", (1.0,), 64, amplitude=0.8)

    def phi(pos, types):
        return np.cos(2 * np.pi * pos[:, 0])

    def lap(pos, types):
        return -(2 * np.pi) ** 2 * np.cos(2 * np.pi * pos[:, 0])

    res, start, end = dynkin_samples(net, DiffusionSpec((sigma,)), rho, 64, phi, lap, t, 0.01, 400, seed=3)
    mean, ci = mean_ci(res)
    assert abs(mean) <= ci
    # heat semigroup: E phi(t) = exp(-sigma^2 (2 pi)^2 t / 2) E phi(0)
    decay = math.exp(-0.5 * sigma**2 * (2 * math.pi) ** 2 * t)
    m, c = mean_ci(end - decay * start)
    assert abs(m) <= c


def test_dynkin_indicator_drift_matches_mean_field():
    net = parse_network(CORPUS["special_constant"])
    N, t, dt, runs = 128, 0.1, 0.01, 200
    rho = analytic_profile("uniform", (0.5, 0.5), 8)

    def ind(pos, types):
        return (types == 2).astype(float)

    res, start, end = dynkin_samples(net, DiffusionSpec((0.1,)), rho, N, ind, _zero, t, dt, runs, seed=5)
    m, c = mean_ci(res)
    assert abs(m) <= c + 1.0 / N
    # mean-field drift of the species-2 fraction from the logistic closed form
    drift = (1 - logistic_special(0.5, 1.0, t)) - 0.5
    dm, dc = mean_ci(end - start)
    assert abs(dm - drift) <= dc + 1.0 / N + dt


def test_dynkin_residual_and_extrapolation():
    rho = analytic_profile("uniform", (0.5, 0.5), 8)
    r1 = dynkin_residual(SPECIAL, DiffusionSpec((0.1,)), rho, 32, _const, _zero, 0.02, 0.01, 5)
    assert r1 == (0.0, 0.0)
    assert extrapolate((1.0, 0.3), (0.5, 0.2)) == (0.0, pytest.approx(0.5))


def test_dynkin_preconditions():
    rho = analytic_profile("uniform", (0.5, 0.5), 8)
    with pytest.raises(ValueError):
        dynkin_samples(SPECIAL, DiffusionSpec((0.1,)), rho, 8, _const, _zero, 0.2, 0.01, 2)
    with pytest.raises(ValueError):
        dynkin_samples(SPECIAL, DiffusionSpec((0.1,)), rho, 8, _const, _zero, 0.05, 0.015, 2)
