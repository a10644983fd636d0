"""N-particle jump-diffusion on the unit torus.

One step is diffuse-then-react. In the reaction substep every ordered pair
(i, j) and reaction R with input (k, l) fires independently with probability
``1 - exp(-dt * Phi_R(x_i - x_j) / N)`` when ``(type_i, type_j) == (k, l)``.
Firings are applied in a uniformly random order; a firing whose participant
already changed type in the same substep is dropped.

Two candidate generators produce that law:

``thinning``
    Draw the number of candidate pairs from Binomial(#pairs, p_max) with
    ``p_max = 1 - exp(-dt * sup Phi_R / N)``, choose that many distinct pairs
    uniformly, then accept each with probability ``p_ij / p_max``. Cost is
    proportional to the number of candidates, not to N^2.
``exhaustive``
    Enumerate every ordered pair with positive rate (brute force, or through a
    cell list for compact kernels) and draw one uniform per pair.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .crn import Reaction, ReactionNetwork
from .field import DensityField
from .kernels import Kernel, eval_kernel, kernel_norms

DT_BOUND = 0.1
SAMPLERS = ("thinning", "exhaustive")


class StepBoundError(ValueError):
    """dt violates ``dt * n_r * sum_R sup Phi_R <= 0.1``."""


@dataclass
class ParticleState:
    """Positions in ``[0,1)^d``, 1-based types, clock and the run's generator.

    ``step`` advances a state in place; use :meth:`copy` to branch.
    """

    positions: np.ndarray
    types: np.ndarray
    n_species: int
    time: float = 0.0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)

    @property
    def N(self) -> int:
        return len(self.types)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def counts(self) -> np.ndarray:
        return np.bincount(self.types - 1, minlength=self.n_species)

    def copy(self) -> "ParticleState":
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return ParticleState(self.positions.copy(), self.types.copy(), self.n_species, self.time, rng)


@dataclass(frozen=True)
class DiffusionSpec:
    """Per-species diffusion coefficients; ``sigma[s-1]`` for species ``s``."""

    sigma: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in np.atleast_1d(self.sigma))
        if any(v < 0 or not math.isfinite(v) for v in s):
            raise ValueError("diffusion coefficients must be finite and >= 0")
        object.__setattr__(self, "sigma", s)

    @classmethod
    def uniform(cls, sigma: float, n_species: int) -> "DiffusionSpec":
        return cls((float(sigma),) * n_species)

    def array(self, n_species: int) -> np.ndarray:
        if len(self.sigma) == 1 and n_species > 1:
            return np.full(n_species, self.sigma[0])
        if len(self.sigma) != n_species:
            raise ValueError(f"need {n_species} diffusion coefficients, got {len(self.sigma)}")
        return np.array(self.sigma)


@dataclass
class StepStats:
    candidates: int = 0
    fired: int = 0
    accepted: int = 0
    rejected: int = 0

    def add(self, other: "StepStats"):
        self.candidates += other.candidates
        self.fired += other.fired
        self.accepted += other.accepted
        self.rejected += other.rejected

    @property
    def rejection_rate(self) -> float:
        return self.rejected / self.fired if self.fired else 0.0


def make_rng(seed: int, run: int = 0, leg: int = 0) -> np.random.Generator:
    """Independent stream for (seed, leg, run)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(leg), int(run))))


def step_bound(net: ReactionNetwork, d: int = 1) -> float:
    """``n_r * sum_R sup Phi_R``; dt times this must not exceed 0.1."""
    return net.n_reactions * sum(kernel_norms(k, d)[1] for k in net.kernels())


def check_dt(net: ReactionNetwork, dt: float, d: int = 1, override: bool = False):
    if not dt > 0:
        raise StepBoundError("dt must be positive")
    val = dt * step_bound(net, d)
    if val > DT_BOUND:
        msg = f"dt*n_r*||Phi||_inf = {val:.4g} exceeds {DT_BOUND}"
        if not override:
            raise StepBoundError(msg)
        warnings.warn(msg + " (override enabled)", RuntimeWarning, stacklevel=2)


def _wrap(x: np.ndarray) -> np.ndarray:
    x = x - np.floor(x)
    x[x >= 1.0] = 0.0
    return x


def sample_initial(rho0: DensityField, n: int, seed=0) -> ParticleState:
    """``n`` i.i.d. particles from ``rho0``: a (species, cell) pair by mass, then uniform in the cell."""
    if n < 1:
        raise ValueError("need at least one particle")
    if np.any(rho0.values < 0):
        raise ValueError("initial density has negative values")
    total = rho0.total_mass()
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"initial density mass {total!r} is not 1")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    M, d = rho0.M, rho0.d
    p = rho0.values.ravel() / rho0.values.sum()
    idx = rng.choice(p.size, size=n, p=p)
    species, cell = np.divmod(idx, M**d)
    cells = np.stack(np.unravel_index(cell, (M,) * d), axis=1)
    pos = _wrap((cells + rng.random((n, d))) / M)
    return ParticleState(pos, (species + 1).astype(np.int64), rho0.n_species, 0.0, rng)


def _reaction_index(net: ReactionNetwork, r) -> Reaction:
    return net.reactions[r] if isinstance(r, (int, np.integer)) else r


def pair_rate(state: ParticleState, net: ReactionNetwork, i: int, j: int, r) -> float:
    """Firing rate of reaction ``r`` on the ordered pair ``(i, j)``."""
    if i == j:
        raise ValueError("pair_rate needs two distinct particles")
    rx = _reaction_index(net, r)
    if (state.types[i], state.types[j]) != rx.input:
        return 0.0
    phi = eval_kernel(net.kernel(rx), state.positions[i] - state.positions[j])
    return float(phi) / state.N


class Prepared:
    """Per-network constants reused across steps of one run."""

    def __init__(self, net: ReactionNetwork, diff: DiffusionSpec, N: int, d: int, dt: float):
        self.net = net
        self.sigma = diff.array(net.n_species)
        self.N, self.d, self.dt = N, d, dt
        self.kernels = net.kernels()
        self.linf = [kernel_norms(k, d)[1] for k in self.kernels]
        self.p_max = [-math.expm1(-dt * b / N) for b in self.linf]

    def with_dt(self, dt: float) -> "Prepared":
        out = object.__new__(Prepared)
        out.__dict__.update(self.__dict__)
        out.dt = dt
        out.p_max = [-math.expm1(-dt * b / self.N) for b in self.linf]
        return out


def _pair_probs(kernel: Kernel, pos: np.ndarray, i: np.ndarray, j: np.ndarray, scale: float):
    phi = eval_kernel(kernel, pos[i] - pos[j])
    return phi, -np.expm1(-scale * np.asarray(phi))


def _thinning_candidates(rng, prep: Prepared, r: int, K, L, pos):
    """Ordered pairs accepted for reaction ``r``, in lexicographic (i, j) order."""
    p_max = prep.p_max[r]
    same = prep.net.reactions[r].is_self
    nk, nl = len(K), len(L)
    total = nk * (nk - 1) if same else nk * nl
    if total == 0 or p_max <= 0:
        return None, 0
    c = int(rng.binomial(total, p_max))
    if c == 0:
        return None, 0
    idx = np.sort(rng.choice(total, size=c, replace=False))
    if same:
        a, b = np.divmod(idx, nk - 1)
        b = b + (b >= a)
        i, j = K[a], K[b]
    else:
        a, b = np.divmod(idx, nl)
        i, j = K[a], L[b]
    _, p = _pair_probs(prep.kernels[r], pos, i, j, prep.dt / prep.N)
    u = rng.random(c)
    keep = u * p_max < p
    return (i[keep], j[keep]), c


def _cell_pairs(kernel: Kernel, pos, K, L, same: bool):
    """All (i, j) with i in K, j in L, i != j and kernel support reached, via a cell list."""
    d = pos.shape[1]
    nc = int(math.floor(1.0 / kernel.radius))
    if nc < 3:
        return None
    cl = np.minimum((pos[L] * nc).astype(np.int64), nc - 1)
    lin_l = np.ravel_multi_index(cl.T, (nc,) * d)
    order = np.argsort(lin_l, kind="stable")
    Ls = L[order]
    starts = np.searchsorted(lin_l[order], np.arange(nc**d + 1))
    ck = np.minimum((pos[K] * nc).astype(np.int64), nc - 1)
    ii, jj = [], []
    for off in np.ndindex(*(3,) * d):
        nb = (ck + np.array(off) - 1) % nc
        lin = np.ravel_multi_index(nb.T, (nc,) * d)
        lo, hi = starts[lin], starts[lin + 1]
        cnt = hi - lo
        tot = int(cnt.sum())
        if tot == 0:
            continue
        rep_i = np.repeat(K, cnt)
        base = np.repeat(lo - np.cumsum(cnt) + cnt, cnt)
        jpos = base + np.arange(tot)
        ii.append(rep_i)
        jj.append(Ls[jpos])
    if not ii:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    keep = i != j
    return i[keep], j[keep]


def _exhaustive_candidates(rng, prep: Prepared, r: int, K, L, pos, cell_list: bool):
    kernel = prep.kernels[r]
    same = prep.net.reactions[r].is_self
    if len(K) == 0 or len(L) == 0 or kernel.rate == 0:
        return None, 0
    pairs = None
    if cell_list and kernel.compact:
        pairs = _cell_pairs(kernel, pos, K, L, same)
    if pairs is None:
        i = np.repeat(K, len(L))
        j = np.tile(L, len(K))
        keep = i != j
        i, j = i[keep], j[keep]
    else:
        i, j = pairs
    phi, p = _pair_probs(kernel, pos, i, j, prep.dt / prep.N)
    pos_rate = np.asarray(phi) > 0
    i, j, p = i[pos_rate], j[pos_rate], p[pos_rate]
    order = np.argsort(i * prep.N + j, kind="stable")
    i, j, p = i[order], j[order], p[order]
    c = len(i)
    if c == 0:
        return None, 0
    u = rng.random(c)
    keep = u < p
    return (i[keep], j[keep]), c


def _react(state: ParticleState, prep: Prepared, sampler: str, cell_list: bool) -> StepStats:
    rng, types, pos = state.rng, state.types, state.positions
    stats = StepStats()
    fire_i, fire_j, fire_r = [], [], []
    members = {}
    for r, rx in enumerate(prep.net.reactions):
        k, l = rx.input
        if k not in members:
            members[k] = np.flatnonzero(types == k)
        if l not in members:
            members[l] = np.flatnonzero(types == l)
        K, L = members[k], members[l]
        if sampler == "thinning":
            res, c = _thinning_candidates(rng, prep, r, K, L, pos)
        else:
            res, c = _exhaustive_candidates(rng, prep, r, K, L, pos, cell_list)
        stats.candidates += c
        if res is not None and len(res[0]):
            fire_i.append(res[0])
            fire_j.append(res[1])
            fire_r.append(np.full(len(res[0]), r))
    if not fire_i:
        return stats
    fi = np.concatenate(fire_i)
    fj = np.concatenate(fire_j)
    fr = np.concatenate(fire_r)
    stats.fired = len(fi)
    order = rng.permutation(len(fi))
    changed = set()
    for q in order:
        i, j, r = int(fi[q]), int(fj[q]), int(fr[q])
        if i in changed or j in changed:
            stats.rejected += 1
            continue
        kp, lp = prep.net.reactions[r].output
        if types[i] != kp:
            types[i] = kp
            changed.add(i)
        if types[j] != lp:
            types[j] = lp
            changed.add(j)
        stats.accepted += 1
    return stats


def advance(state: ParticleState, prep: Prepared, dt: float, sampler: str = "thinning",
            cell_list: bool = True) -> StepStats:
    """One step without argument validation; ``step`` is the checked entry point."""
    if prep.sigma.any():
        noise = state.rng.standard_normal(state.positions.shape)
        scale = prep.sigma[state.types - 1] * math.sqrt(dt)
        state.positions = _wrap(state.positions + scale[:, None] * noise)
    if dt != prep.dt:
        prep = prep.with_dt(dt)
    stats = _react(state, prep, sampler, cell_list)
    state.time += dt
    return stats


def step(state: ParticleState, net: ReactionNetwork, diff: DiffusionSpec, dt: float,
         sampler: str = "thinning", cell_list: bool = True, allow_large_dt: bool = False) -> ParticleState:
    """Advance ``state`` in place by one diffuse-then-react step and return it."""
    check_dt(net, dt, state.d, allow_large_dt)
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}")
    prep = Prepared(net, diff, state.N, state.d, dt)
    advance(state, prep, dt, sampler, cell_list)
    return state


def empirical_histogram(state: ParticleState, bins_per_dim: int) -> DensityField:
    """Binned empirical measure, normalized so the whole field integrates to 1."""
    if bins_per_dim < 1:
        raise ValueError("bins_per_dim must be >= 1")
    B, d, n = bins_per_dim, state.d, state.n_species
    cells = np.minimum((state.positions * B).astype(np.int64), B - 1)
    lin = np.ravel_multi_index(cells.T, (B,) * d) if d > 1 else cells[:, 0]
    flat = (state.types - 1) * B**d + lin
    counts = np.bincount(flat, minlength=n * B**d).astype(float)
    dens = counts / (state.N * float(B) ** (-d))
    return DensityField(dens.reshape((n,) + (B,) * d), state.time)


@dataclass
class Trajectory:
    """Observables of one run at its record times."""

    run: int
    times: list
    counts: np.ndarray
    histograms: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    stats: StepStats = field(default_factory=StepStats)


def _record_times(t_final: float, record_times):
    times = sorted({float(t) for t in (record_times if record_times is not None else [0.0, t_final])})
    if times and (times[0] < 0 or times[-1] > t_final + 1e-12):
        raise ValueError("record times must lie in [0, t_final]")
    if not times or times[0] != 0.0:
        times = [0.0] + times
    return times


def simulate(net: ReactionNetwork, diff: DiffusionSpec, rho0: DensityField, N: int, t_final: float,
             dt: float, seed: int = 0, run: int = 0, leg: int = 0, record_times=None,
             bins: int | None = None, snapshots: bool = False, sampler: str = "thinning",
             cell_list: bool = True, allow_large_dt: bool = False,
             initial: ParticleState | None = None) -> Trajectory:
    """Run one realization from ``t = 0`` to ``t_final``.

    The last step before a record time is shortened so records fall exactly on
    it. Output depends only on ``(seed, leg, run)`` and the arguments.
    """
    if N < 2:
        raise ValueError("need N >= 2")
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}")
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    check_dt(net, dt, rho0.d, allow_large_dt)
    rng = make_rng(seed, run, leg)
    state = initial.copy() if initial is not None else sample_initial(rho0, N, rng)
    if initial is not None:
        state.rng = rng
    prep = Prepared(net, diff, state.N, state.d, dt)
    times = _record_times(t_final, record_times)
    traj = Trajectory(run, [], np.zeros((len(times), net.n_species), dtype=np.int64))

    def record(q, t):
        traj.times.append(t)
        traj.counts[q] = state.counts()
        if bins:
            traj.histograms.append(empirical_histogram(state, bins))
        if snapshots:
            traj.snapshots.append((t, state.positions.copy(), state.types.copy()))

    t = 0.0
    for q, target in enumerate(times):
        n_full = int(math.floor((target - t) / dt + 1e-9))
        for _ in range(n_full):
            traj.stats.add(advance(state, prep, dt, sampler, cell_list))
        rest = (target - t) - n_full * dt
        if rest > 1e-9 * dt:
            traj.stats.add(advance(state, prep, rest, sampler, cell_list))
        t = target
        state.time = target
        record(q, target)
    return traj


def _sim_job(kwargs):
    return simulate(**kwargs)


def thread_cap() -> int:
    env = os.environ.get("CHAOSKIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"CHAOSKIT_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_ensemble(runs: int, threads: int | None = None, **kwargs) -> list[Trajectory]:
    """``runs`` independent realizations, returned in run order.

    Runs are distributed over at most ``threads`` worker processes (default:
    ``CHAOSKIT_THREADS`` or the CPU count). Results do not depend on the
    number of workers.
    """
    jobs = [dict(kwargs, run=r) for r in range(runs)]
    workers = min(threads or thread_cap(), runs)
    if workers <= 1:
        return [simulate(**job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sim_job, jobs))


def write_counts(trajs, fh, n_species: int) -> None:
    fh.write(",".join(["time", "run"] + [f"species_{s}" for s in range(1, n_species + 1)]) + "\n")
    for tr in trajs:
        for t, row in zip(tr.times, tr.counts):
            fh.write(",".join([repr(t), str(tr.run)] + [str(int(c)) for c in row]) + "\n")


def write_histograms(trajs, fh) -> None:
    fh.write("time,run,species,bin_index,density\n")
    for tr in trajs:
        for h in tr.histograms:
            flat = h.values.reshape(h.n_species, -1)
            for s in range(h.n_species):
                for b, v in enumerate(flat[s]):
                    fh.write(f"{h.time!r},{tr.run},{s + 1},{b},{float(v)!r}\n")


def write_snapshots(trajs, fh, d: int) -> None:
    fh.write(",".join(["run", "time", "particle"] + [f"x_{a}" for a in range(1, d + 1)] + ["type"]) + "\n")
    for tr in trajs:
        for t, pos, types in tr.snapshots:
            for p in range(len(types)):
                xs = ",".join(repr(float(v)) for v in pos[p])
                fh.write(f"{tr.run},{t!r},{p},{xs},{int(types[p])}\n")
