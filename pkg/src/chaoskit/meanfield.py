"""Nonlocal reaction-diffusion mean-field system on a periodic grid.

Time stepping is IMEX: the reaction term is advanced by explicit Euler and the
diffusion by its exact Fourier multiplier, so dt is only limited by reaction
magnitudes. Convolutions use the FFT of the circulant kernel table.
"""
from __future__ import annotations

import math

import numpy as np

from .crn import ReactionNetwork
from .field import DensityField
from .kernels import Kernel, kernel_norms, kernel_table

NEG_TOL = 1e-12


class NegativeDensityError(RuntimeError):
    """Raised when a step produces a value below ``-NEG_TOL``; dt is too large."""


def _spatial_axes(d: int) -> tuple[int, ...]:
    return tuple(range(-d, 0))


def periodic_convolve(kernel: Kernel, u: np.ndarray) -> np.ndarray:
    """``out[c] = cellvol * sum_c' kernel(x_c - x_c') * u[c']`` on an M^d grid."""
    u = np.asarray(u, dtype=float)
    d = u.ndim
    M = u.shape[0]
    if any(s != M for s in u.shape):
        raise ValueError(f"field must live on a square grid, got {u.shape}")
    if kernel.shape == "constant":
        return np.full(u.shape, kernel.rate * u.sum() * M ** (-d))
    return _fft_convolve(_kernel_hat(kernel, M, d), u)


_HAT_CACHE: dict = {}


def _kernel_hat(kernel: Kernel, M: int, d: int) -> np.ndarray:
    key = (kernel, M, d)
    hat = _HAT_CACHE.get(key)
    if hat is None:
        hat = np.fft.rfftn(kernel_table(kernel, M, d)) * M ** (-d)
        if len(_HAT_CACHE) > 64:
            _HAT_CACHE.clear()
        _HAT_CACHE[key] = hat
    return hat


def _fft_convolve(hat: np.ndarray, u: np.ndarray) -> np.ndarray:
    axes = _spatial_axes(u.ndim)
    return np.fft.irfftn(hat * np.fft.rfftn(u, axes=axes), s=u.shape, axes=axes)


def direct_convolve(kernel: Kernel, u: np.ndarray) -> np.ndarray:
    """O(M^{2d}) reference for :func:`periodic_convolve`."""
    u = np.asarray(u, dtype=float)
    d, M = u.ndim, u.shape[0]
    K = kernel_table(kernel, M, d).ravel()
    flat = u.ravel()
    idx = np.indices((M,) * d).reshape(d, -1).T
    out = np.empty(M**d)
    for a in range(M**d):
        off = (idx[a] - idx) % M
        lin = np.ravel_multi_index(off.T, (M,) * d)
        out[a] = np.dot(K[lin], flat)
    return (out * M ** (-d)).reshape(u.shape)


def _values(field) -> np.ndarray:
    return field.values if isinstance(field, DensityField) else np.asarray(field, dtype=float)


def reaction_rhs(net: ReactionNetwork, field) -> np.ndarray:
    """Sum over reactions of losses at the inputs and gains at the outputs."""
    u = _values(field)
    if u.shape[0] != net.n_species:
        raise ValueError(f"field has {u.shape[0]} species, network has {net.n_species}")
    rhs = np.zeros_like(u)
    conv_cache: dict = {}

    def conv(kname, s):
        key = (kname, s)
        if key not in conv_cache:
            conv_cache[key] = periodic_convolve(net.kernel_table[kname], u[s])
        return conv_cache[key]

    for r in net.reactions:
        k, l = (s - 1 for s in r.input)
        kp, lp = (s - 1 for s in r.output)
        flux_k = conv(r.kernel_name, l) * u[k]  # (Phi*u_l) u_k
        flux_l = conv(r.kernel_name, k) * u[l]  # (Phi*u_k) u_l
        rhs[k] -= flux_k
        rhs[l] -= flux_l
        rhs[kp] += flux_k
        rhs[lp] += flux_l
    return rhs


def heat_multiplier(M: int, d: int, sigma: float, dt: float) -> np.ndarray:
    """Fourier multiplier of ``exp(dt * sigma^2/2 * Laplacian)`` in rfftn layout."""
    k_full = np.fft.fftfreq(M, 1.0 / M)
    k_half = np.fft.rfftfreq(M, 1.0 / M)
    axes = [k_full] * (d - 1) + [k_half]
    mesh = np.meshgrid(*axes, indexing="ij")
    ksq = sum(m * m for m in mesh)
    return np.exp(-0.5 * sigma**2 * (2 * np.pi) ** 2 * ksq * dt)


def _sigmas(diff, n: int) -> np.ndarray:
    s = np.asarray(getattr(diff, "sigma", diff), dtype=float)
    if s.ndim == 0 or s.shape == (1,):
        s = np.full(n, float(s.reshape(-1)[0]))
    if s.shape != (n,):
        raise ValueError(f"need {n} diffusion coefficients, got {s.shape}")
    if np.any(s < 0):
        raise ValueError("diffusion coefficients must be nonnegative")
    return s


def _clip(v: np.ndarray) -> np.ndarray:
    lo = v.min() if v.size else 0.0
    if lo < -NEG_TOL:
        raise NegativeDensityError(
            f"density reached {lo:.3e} < -{NEG_TOL}; reduce dt"
        )
    return np.where(v < 0, 0.0, v)


class PDEStepper:
    """Reusable IMEX stepper with cached diffusion multipliers."""

    def __init__(self, net: ReactionNetwork, diff, M: int, d: int, dt: float):
        if dt < 0:
            raise ValueError("dt must be >= 0")
        self.net = net
        self.dt = float(dt)
        self.M, self.d = M, d
        self.sigma = _sigmas(diff, net.n_species)
        self.mult = [heat_multiplier(M, d, s, dt) if s > 0 else None for s in self.sigma]

    def advance(self, u: np.ndarray, dt: float | None = None) -> np.ndarray:
        dt = self.dt if dt is None else float(dt)
        if dt == 0:
            return u.copy()
        mults = self.mult if dt == self.dt else [
            heat_multiplier(self.M, self.d, s, dt) if s > 0 else None for s in self.sigma
        ]
        v = u + dt * reaction_rhs(self.net, u)
        axes = _spatial_axes(self.d)
        for s, m in enumerate(mults):
            if m is not None:
                v[s] = np.fft.irfftn(m * np.fft.rfftn(v[s], axes=axes), s=v[s].shape, axes=axes)
        return _clip(v)


def pde_step(net: ReactionNetwork, diff, field: DensityField, dt: float) -> DensityField:
    """One IMEX step of the mean-field system."""
    if field.n_species != net.n_species:
        raise ValueError(f"field has {field.n_species} species, network has {net.n_species}")
    stepper = PDEStepper(net, diff, field.M, field.d, dt)
    return field.with_values(stepper.advance(np.array(field.values)), field.time + dt)


def _schedule(t_final: float, dt: float, record_times):
    """Step sizes hitting every record time exactly, plus the record flags."""
    if t_final < 0 or dt <= 0:
        raise ValueError("need t_final >= 0 and dt > 0")
    times = sorted({float(t) for t in (record_times if record_times is not None else [t_final])})
    if times and (times[0] < 0 or times[-1] > t_final + 1e-12):
        raise ValueError("record times must lie in [0, t_final]")
    return times


def solve_pde(net, diff, rho0: DensityField, t_final: float, dt: float, record_times=None,
              check_mass: bool = True) -> list[DensityField]:
    """Integrate to ``t_final`` and return snapshots at ``record_times``.

    The initial field is always included as the first snapshot. The step is
    shortened where needed so snapshots land exactly on the requested times.
    """
    rho0.check_normalized()
    times = [t for t in _schedule(t_final, dt, record_times) if t > 0]
    stepper = PDEStepper(net, diff, rho0.M, rho0.d, dt)
    u = np.array(rho0.values)
    m0 = rho0.total_mass()
    out = [rho0]
    t = 0.0
    for target in times:
        n_full = int(math.floor((target - t) / dt + 1e-9))
        for _ in range(n_full):
            u = stepper.advance(u)
        rest = (target - t) - n_full * dt
        if rest > 1e-9 * dt:
            u = stepper.advance(u, rest)
        t = target
        snap = DensityField(u, target)
        if check_mass and abs(snap.total_mass() - m0) > 1e-8:
            raise RuntimeError(f"mass drift {snap.total_mass() - m0:.3e} at t={target}")
        out.append(snap)
    return out


def mass_action_rates(net: ReactionNetwork, d: int = 1) -> np.ndarray:
    """Per-reaction mass-action constants: the L1 norm of each kernel."""
    return np.array([kernel_norms(k, d)[0] for k in net.kernels()])


def mass_action_rhs(net: ReactionNetwork, y: np.ndarray, rates) -> np.ndarray:
    dy = np.zeros_like(y)
    for r, lam in zip(net.reactions, rates):
        k, l = (s - 1 for s in r.input)
        kp, lp = (s - 1 for s in r.output)
        flux = lam * y[k] * y[l]
        dy[k] -= flux
        dy[l] -= flux
        dy[kp] += flux
        dy[lp] += flux
    return dy


def solve_mass_action(net: ReactionNetwork, y0, rate_constants, t_final: float, dt: float,
                      record_times=None):
    """Classical RK4 for the spatially homogeneous system.

    Returns ``(times, Y)`` with ``Y[i]`` the concentrations at ``times[i]``.
    """
    y = np.array(y0, dtype=float)
    if np.any(y < 0):
        raise ValueError("initial concentrations must be nonnegative")
    if y.shape != (net.n_species,):
        raise ValueError("y0 length must equal n_species")
    rates = np.asarray(rate_constants, dtype=float)
    if rates.shape != (net.n_reactions,):
        raise ValueError("need one rate constant per reaction")
    times = [t for t in _schedule(t_final, dt, record_times) if t > 0]

    def f(v):
        return mass_action_rhs(net, v, rates)

    def rk4(v, h):
        k1 = f(v)
        k2 = f(v + 0.5 * h * k1)
        k3 = f(v + 0.5 * h * k2)
        k4 = f(v + h * k3)
        return v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    out_t, out_y = [0.0], [y.copy()]
    t = 0.0
    for target in times:
        n = max(1, math.ceil((target - t) / dt - 1e-9))
        h = (target - t) / n
        for _ in range(n):
            y = rk4(y, h)
        t = target
        out_t.append(target)
        out_y.append(y.copy())
    return np.array(out_t), np.array(out_y)


def logistic_special(u0: float, lam: float, t: float) -> float:
    """Closed form for u' = -lam u w with u + w = 1."""
    e = math.exp(-lam * t)
    return u0 * e / (1.0 - u0 + u0 * e)
