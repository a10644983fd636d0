"""Exact jump generator and its adjoint on small discretized state spaces.

A single particle lives on ``m^d`` grid nodes times ``n`` species; its state
index is ``(species - 1) * m^d + cell``, the same layout as a flattened
:class:`~chaoskit.field.DensityField`. A function on the N-particle space is an
array of shape ``(P,) * N`` with ``P = n m^d``.

Per-pair contributions are sorted before summation, so the result does not
depend on particle labelling at the bit level.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse

from .crn import ReactionNetwork
from .field import DensityField
from .kernels import eval_kernel, kernel_table
from .particle import DiffusionSpec, Prepared, check_dt, make_rng, sample_initial, advance

MAX_STATES = 10**6
Z99 = 2.5758293035489004


@dataclass(frozen=True)
class DiscreteStateSpace:
    m: int
    N: int
    n: int
    d: int = 1

    def __post_init__(self):
        if self.m < 1 or self.N < 2 or self.n < 1 or self.d < 1:
            raise ValueError("need m >= 1, N >= 2, n >= 1, d >= 1")
        if self.size > MAX_STATES:
            raise ValueError(f"state space has {self.size} states, cap is {MAX_STATES}")

    @property
    def cells(self) -> int:
        return self.m**self.d

    @property
    def P(self) -> int:
        return self.cells * self.n

    @property
    def size(self) -> int:
        return (self.m**self.d * self.n) ** self.N

    @property
    def shape(self) -> tuple:
        return (self.P,) * self.N

    @property
    def vol(self) -> float:
        """Measure of one N-particle state: cell volume to the power N."""
        return float(self.m) ** (-self.d * self.N)

    def single(self):
        """``(cell, species)`` arrays over single-particle states."""
        a = np.arange(self.P)
        return a % self.cells, a // self.cells + 1

    def inner(self, phi, psi) -> float:
        return self.vol * float(np.sum(phi * psi))

    def random(self, rng, count: int = 1):
        return rng.standard_normal((count,) + self.shape)


def _pair_tables(space: DiscreteStateSpace, net: ReactionNetwork):
    """For every reaction: pair weight ``Phi(x_a - x_b)`` and species masks over (a, b)."""
    cell, spec = space.single()
    m, d = space.m, space.d
    coords = np.stack(np.unravel_index(cell, (m,) * d), axis=1)
    off = (coords[:, None, :] - coords[None, :, :]) % m
    out = []
    for r in net.reactions:
        tab = kernel_table(net.kernel(r), m, d)
        phi = tab[tuple(np.moveaxis(off, -1, 0))]
        k, l = r.input
        kp, lp = r.output
        minus = (spec[:, None] == k) & (spec[None, :] == l)
        plus = (spec[:, None] == kp) & (spec[None, :] == lp)
        # single-particle targets when the reaction swaps species in place
        fwd_a = cell + (kp - 1) * space.cells
        fwd_b = cell + (lp - 1) * space.cells
        bwd_a = cell + (k - 1) * space.cells
        bwd_b = cell + (l - 1) * space.cells
        out.append((phi, minus, plus, (fwd_a, fwd_b), (bwd_a, bwd_b)))
    return out


def _check_vec(space, v):
    v = np.asarray(v, dtype=float)
    if v.size != space.size:
        raise ValueError(f"vector has {v.size} entries, space has {space.size}")
    return v.reshape(space.shape)


def _pair_terms(space, net, v, adjoint: bool):
    """Stack of per (i, j, R) contributions, each shaped like the state space."""
    N, P = space.N, space.P
    terms = []
    for phi, minus, plus, fwd, bwd in _pair_tables(space, net):
        if adjoint:
            gain_mask, (ta, tb) = plus, bwd
        else:
            gain_mask, (ta, tb) = minus, fwd
        w_loss = np.where(minus, phi, 0.0)
        w_gain = np.where(gain_mask, phi, 0.0)
        A = np.broadcast_to(ta[:, None], (P, P))
        B = np.broadcast_to(tb[None, :], (P, P))
        for i, j in itertools.permutations(range(N), 2):
            vij = np.moveaxis(v, (i, j), (0, 1))
            moved = vij[A, B]  # v at the (i, j) coordinates replaced by the target pair
            extra = (None,) * (N - 2)
            gw = w_gain[(slice(None), slice(None)) + extra]
            lw = w_loss[(slice(None), slice(None)) + extra]
            if adjoint:
                t = gw * moved - lw * vij
            else:
                t = lw * (moved - vij)
            terms.append(np.moveaxis(t, (0, 1), (i, j)))
    return terms


def _sum_sorted(terms, shape):
    if not terms:
        return np.zeros(shape)
    return np.sort(np.stack(terms), axis=0).sum(axis=0)


def apply_jump_generator(space: DiscreteStateSpace, net: ReactionNetwork, phi) -> np.ndarray:
    """Jump part of the N-particle generator applied to ``phi``."""
    v = _check_vec(space, phi)
    return _sum_sorted(_pair_terms(space, net, v, adjoint=False), space.shape) / space.N


def apply_jump_adjoint(space: DiscreteStateSpace, net: ReactionNetwork, psi) -> np.ndarray:
    """Adjoint of the jump generator applied to ``psi``."""
    v = _check_vec(space, psi)
    return _sum_sorted(_pair_terms(space, net, v, adjoint=True), space.shape) / space.N


def generator_matrix(space: DiscreteStateSpace, net: ReactionNetwork) -> sparse.csr_matrix:
    """Sparse matrix ``G`` with ``(G phi)(y) = sum_y' G[y, y'] phi(y')``, built state by state.

    Row sums vanish and off-diagonals are nonnegative; ``G.T`` is the forward
    (density) rate matrix.
    """
    N, P = space.N, space.P
    states = np.arange(space.size)
    coords = np.stack(np.unravel_index(states, space.shape), axis=1)
    strides = np.array([P ** (N - 1 - q) for q in range(N)], dtype=np.int64)
    rows, cols, vals = [], [], []
    for phi, minus, _plus, (fa, fb), _ in _pair_tables(space, net):
        for i, j in itertools.permutations(range(N), 2):
            a, b = coords[:, i], coords[:, j]
            w = np.where(minus[a, b], phi[a, b], 0.0) / N
            on = w > 0
            src = states[on]
            tgt = src + (fa[a[on]] - a[on]) * strides[i] + (fb[b[on]] - b[on]) * strides[j]
            rows += [src, src]
            cols += [tgt, src]
            vals += [w[on], -w[on]]
    if not rows:
        return sparse.csr_matrix((space.size, space.size))
    G = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.size, space.size),
    )
    return G.tocsr()


def adjoint_residual(space, net, phi, psi) -> float:
    """``|<S phi, psi> - <phi, S* psi>|``."""
    lhs = space.inner(apply_jump_generator(space, net, phi), psi)
    rhs = space.inner(phi, apply_jump_adjoint(space, net, psi))
    return abs(lhs - rhs)


def transpose_particles(space: DiscreteStateSpace, v, i: int, j: int) -> np.ndarray:
    """``(tau v)(y) = v(tau y)`` for the transposition of particles ``i`` and ``j``."""
    v = _check_vec(space, v)
    axes = list(range(space.N))
    axes[i], axes[j] = axes[j], axes[i]
    return np.transpose(v, axes)


def permutation_defect(space, net, psi) -> float:
    """Max over transpositions of ``|tau(S* psi) - S*(tau psi)|``."""
    base = apply_jump_adjoint(space, net, psi)
    worst = 0.0
    for i, j in itertools.combinations(range(space.N), 2):
        lhs = transpose_particles(space, base, i, j)
        rhs = apply_jump_adjoint(space, net, transpose_particles(space, psi, i, j))
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def symmetrize(space: DiscreteStateSpace, v) -> np.ndarray:
    v = _check_vec(space, v)
    perms = list(itertools.permutations(range(space.N)))
    return sum(np.transpose(v, p) for p in perms) / len(perms)


def forward_evolution(space, net, psi0, t: float, max_states: int = 4096) -> np.ndarray:
    """``exp(t S*) psi0`` by dense scaling-and-squaring."""
    if space.size > max_states:
        raise ValueError(f"dense exponential limited to {max_states} states")
    Q = generator_matrix(space, net).T.toarray()
    out = linalg.expm(t * Q) @ np.asarray(psi0, dtype=float).ravel()
    return out.reshape(space.shape)


def exchangeability_defect(space, net, psi0, t: float) -> float:
    """Max over transpositions of ``|tau psi(t) - psi(t)|`` for the forward evolution."""
    pt = forward_evolution(space, net, psi0, t)
    worst = 0.0
    for i, j in itertools.combinations(range(space.N), 2):
        worst = max(worst, float(np.abs(transpose_particles(space, pt, i, j) - pt).max()))
    return worst


def laplacian_matrix(m: int, d: int = 1) -> sparse.csr_matrix:
    """Periodic second-difference Laplacian on ``m^d`` nodes with spacing ``1/m``."""
    one = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="lil")
    one[0, m - 1] = 1.0
    one[m - 1, 0] = 1.0
    one = one.tocsr() * m**2
    eye = sparse.identity(m, format="csr")
    L = sparse.csr_matrix((m**d, m**d))
    for ax in range(d):
        term = None
        for q in range(d):
            f = one if q == ax else eye
            term = f if term is None else sparse.kron(term, f, format="csr")
        L = L + term
    return L.tocsr()


# --- Dynkin residual along simulated trajectories ---------------------------------


def empirical_generator(net: ReactionNetwork, sigma: np.ndarray, phi, lap_phi, pos, types) -> float:
    """Generator of the empirical average ``(1/N) sum_i phi(x_i, xi_i)`` at one configuration."""
    N = len(types)
    val = float(np.mean(0.5 * sigma[types - 1] ** 2 * lap_phi(pos, types)))
    if not net.reactions:
        return val
    ii, jj = np.nonzero(~np.eye(N, dtype=bool))
    disp = pos[ii] - pos[jj]
    for r in net.reactions:
        k, l = r.input
        kp, lp = r.output
        on = (types[ii] == k) & (types[jj] == l)
        if not on.any():
            continue
        i, j = ii[on], jj[on]
        w = eval_kernel(net.kernel(r), disp[on])
        change = (phi(pos[i], np.full(len(i), kp)) + phi(pos[j], np.full(len(j), lp))
                  - phi(pos[i], np.full(len(i), k)) - phi(pos[j], np.full(len(j), l)))
        val += float(np.sum(w * change)) / N**2
    return val


def dynkin_samples(net: ReactionNetwork, diff: DiffusionSpec, rho0: DensityField, N: int, phi, lap_phi,
                   t: float, dt: float, runs: int, seed: int = 0, leg: int = 0):
    """Per-run ``(residual, phibar(0), phibar(t))`` arrays.

    The residual is ``phibar(t) - phibar(0) - int_0^t L phibar ds`` with the
    time integral done by the trapezoid rule on the simulation grid.
    ``phi(pos, types)`` and ``lap_phi(pos, types)`` return per-particle values.
    """
    if not 0 < t <= 0.1:
        raise ValueError("Dynkin check needs 0 < t <= 0.1")
    check_dt(net, dt, rho0.d)
    n_steps = int(round(t / dt))
    if abs(n_steps * dt - t) > 1e-9 * t:
        raise ValueError("t must be a multiple of dt")
    sigma = diff.array(net.n_species)
    res = np.empty(runs)
    start = np.empty(runs)
    end = np.empty(runs)
    for run in range(runs):
        rng = make_rng(seed, run, leg)
        state = sample_initial(rho0, N, rng)
        prep = Prepared(net, diff, N, state.d, dt)
        p0 = float(np.mean(phi(state.positions, state.types)))
        g_prev = empirical_generator(net, sigma, phi, lap_phi, state.positions, state.types)
        integral = 0.0
        for _ in range(n_steps):
            advance(state, prep, dt)
            g = empirical_generator(net, sigma, phi, lap_phi, state.positions, state.types)
            integral += 0.5 * dt * (g_prev + g)
            g_prev = g
        end[run] = float(np.mean(phi(state.positions, state.types)))
        start[run] = p0
        res[run] = end[run] - p0 - integral
    return res, start, end


def mean_ci(samples) -> tuple[float, float]:
    """Sample mean and its 99% normal half-width."""
    s = np.asarray(samples, dtype=float)
    return float(s.mean()), float(Z99 * s.std(ddof=1) / math.sqrt(len(s)))


def dynkin_residual(net: ReactionNetwork, diff: DiffusionSpec, rho0: DensityField, N: int, phi, lap_phi,
                    t: float, dt: float, runs: int, seed: int = 0, leg: int = 0):
    """Mean and 99% half-width of the Dynkin residual over ``runs`` realizations."""
    res, _, _ = dynkin_samples(net, diff, rho0, N, phi, lap_phi, t, dt, runs, seed, leg)
    return mean_ci(res)


def extrapolate(r_coarse, r_fine):
    """First-order Richardson combination of ``(mean, ci)`` at ``dt`` and ``dt/2``."""
    (m1, c1), (m2, c2) = r_coarse, r_fine
    return 2.0 * m2 - m1, math.sqrt(4.0 * c2**2 + c1**2)


def write_results(rows, fh) -> None:
    """Rows of ``(check, space, N, residual, tolerance, pass)``."""
    fh.write("check,space,N,residual,tolerance,pass\n")
    for check, space, N, resid, tol, ok in rows:
        fh.write(f"{check},{space},{N},{float(resid)!r},{float(tol)!r},{int(bool(ok))}\n")
