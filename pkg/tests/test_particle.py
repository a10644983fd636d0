import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from chaoskit.crn import parse_network
from chaoskit.field import DensityField, analytic_profile
from chaoskit.kernels import min_image
from chaoskit.particle import (DiffusionSpec, ParticleState, Prepared, StepBoundError, advance,
                               check_dt, empirical_histogram, make_rng, pair_rate, run_ensemble,
                               sample_initial, simulate, step, write_counts, write_histograms,
                               write_snapshots)

from conftest import CORPUS

SPECIAL = parse_network("kernel k = tophat(radius=0.25, rate=5)\nS1 + S2 -> S2 + S2 @ k")
NO_SIG = DiffusionSpec((0.0,))


def _state(pos, types, n_species=2, seed=0):
    pos = np.asarray(pos, dtype=float).reshape(len(types), -1)
    return ParticleState(pos, np.asarray(types, dtype=np.int64), n_species, 0.0, make_rng(seed))


# sampling

def test_sample_uniform_single_species():
    st_ = sample_initial(analytic_profile("uniform", (1.0,), 32), 1000, seed=3)
    assert np.all(st_.types == 1)
    obs = np.bincount((st_.positions[:, 0] * 16).astype(int), minlength=16)
    assert stats.chisquare(obs).pvalue > 0.001


def test_sample_point_mass_cell():
    v = np.zeros((2, 8))
    v[1, 5] = 8.0
    st_ = sample_initial(DensityField(v), 200, seed=1)
    assert np.all(st_.types == 2)
    assert np.all((st_.positions[:, 0] >= 5 / 8) & (st_.positions[:, 0] < 6 / 8))


def test_sample_type_counts_binomial():
    n = 10000
    st_ = sample_initial(analytic_profile("uniform", (0.3, 0.7), 8), n, seed=5)
    assert abs(np.sum(st_.types == 1) - 3000) <= 3 * math.sqrt(n * 0.3 * 0.7)


def test_sample_rejects_bad_density():
    with pytest.raises(ValueError):
        sample_initial(DensityField(np.full((1, 4), 2.0)), 10)
    v = np.full((1, 4), 1.0)
    v[0, 0], v[0, 1] = -0.5, 1.5
    with pytest.raises(ValueError):
        sample_initial(DensityField(v), 10)


# pair rates

def test_pair_rate_inside():
    s = _state(np.zeros(100), [1, 2] + [1] * 98)
    s.positions[1, 0] = 0.1
    assert pair_rate(s, SPECIAL, 0, 1, 0) == pytest.approx(0.05)


def test_pair_rate_order_sensitive():
    s = _state(np.zeros(100), [2, 1] + [1] * 98)
    s.positions[1, 0] = 0.1
    assert pair_rate(s, SPECIAL, 0, 1, 0) == 0


def test_pair_rate_outside_support():
    s = _state(np.zeros(100), [1, 2] + [1] * 98)
    s.positions[1, 0] = 0.5
    assert pair_rate(s, SPECIAL, 0, 1, 0) == 0


def test_pair_rate_same_index():
    with pytest.raises(ValueError):
        pair_rate(_state([0, 0.1], [1, 2]), SPECIAL, 1, 1, 0)


# dt precondition

def test_dt_bound():
    check_dt(SPECIAL, 0.02)
    with pytest.raises(StepBoundError):
        check_dt(SPECIAL, 0.03)
    with pytest.warns(RuntimeWarning):
        check_dt(SPECIAL, 0.03, override=True)


# stepping

def test_brownian_variance():
    N, m, dt, sigma = 10000, 20, 0.01, 0.2
    s = sample_initial(analytic_profile("uniform", (1.0,), 8), N, seed=7)
    from chaoskit.crn import ReactionNetwork
    net = ReactionNetwork(1, (), {})
    disp = np.zeros((N, 1))
    for _ in range(m):
        before = s.positions.copy()
        step(s, net, DiffusionSpec((sigma,)), dt)
        disp += min_image(s.positions - before)
    sq = disp[:, 0] ** 2
    se = sq.std(ddof=1) / math.sqrt(N)
    assert abs(sq.mean() - sigma**2 * m * dt) <= 4 * se
    assert np.all((s.positions >= 0) & (s.positions < 1))
    assert s.time == pytest.approx(m * dt)


def test_zero_rates_keep_types():
    net = parse_network("kernel k = tophat(radius=0.01, rate=5)\nS1 + S2 -> S2 + S2 @ k")
    s = _state([0.0, 0.5], [1, 2])
    step(s, net, DiffusionSpec((0.0,)), 0.01)
    assert list(s.types) == [1, 2]
    assert s.time == 0.01


def _jump_chain_absorption(n1, N, lam, size, rng):
    # total rate of the type-1 -> type-2 conversion is lam * n1 * (N - n1) / N
    out = np.zeros(size)
    for a in range(1, n1 + 1):
        out += rng.exponential(N / (lam * a * (N - a)), size)
    return out


def test_matches_mass_action_jump_chain():
    net = parse_network("kernel k = constant(rate=10)\nS1 + S2 -> S2 + S2 @ k")
    N, n1, lam, dt, runs = 10, 5, 10.0, 0.005, 300
    prep = Prepared(net, NO_SIG, N, 1, dt)
    times = []
    for run in range(runs):
        s = _state(np.zeros(N), [1] * n1 + [2] * (N - n1), seed=run)
        s.rng = make_rng(11, run)
        while np.any(s.types == 1):
            advance(s, prep, dt)
        times.append(s.time)
    oracle = _jump_chain_absorption(n1, N, lam, 2000, np.random.default_rng(99))
    assert stats.ks_2samp(times, oracle).pvalue > 0.001


def test_self_reaction_fires_on_both_orders():
    net = parse_network("kernel k = constant(rate=10)\nS1 + S1 -> S1 + S2 @ k")
    N, dt, trials = 2, 0.01, 20000
    prep = Prepared(net, NO_SIG, N, 1, dt)
    s = _state([0.1, 0.6], [1, 1], seed=0)
    s.rng = make_rng(4)
    fired = np.empty(trials)
    for t in range(trials):
        s.types[:] = 1
        fired[t] = advance(s, prep, dt).fired
    p = -math.expm1(-10.0 * dt / N)
    # two ordered pairs each fire with probability p, so about 2 * Phi * dt / N firings per step
    assert abs(fired.mean() - 2 * p) <= 4 * fired.std(ddof=1) / math.sqrt(trials)
    assert 2 * p == pytest.approx(2 * 10.0 * dt / N, rel=0.05)


def test_rule_of_assignment():
    net = parse_network("kernel k = constant(rate=1)\nS1 + S2 -> S3 + S4 @ k")
    hits = 0
    for seed in range(300):
        s = _state([0.0, 0.5], [1, 2], n_species=4, seed=seed)
        step(s, net, NO_SIG, 0.1)
        if s.types[0] != 1:
            assert list(s.types) == [3, 4]
            hits += 1
        else:
            assert list(s.types) == [1, 2]
    assert hits > 0


@pytest.mark.parametrize("d,radius", [(1, 0.2), (2, 0.15)])
def test_cell_list_bit_identical(d, radius):
    net = parse_network(
        f"kernel a = tophat(radius={radius}, rate=4)\nkernel b = tophat(radius=0.3, rate=2)\n"
        "S1 + S2 -> S2 + S2 @ a\nS2 + S2 -> S1 + S2 @ b\nS1 + S1 -> S1 + S2 @ a"
    )
    rho = analytic_profile("uniform", (0.5, 0.5), 4, d)
    kw = dict(net=net, diff=DiffusionSpec((0.05,)), rho0=rho, N=300, t_final=0.2, dt=0.003,
              seed=3, record_times=[0.1, 0.2], snapshots=True, sampler="exhaustive")
    a = simulate(cell_list=True, **kw)
    b = simulate(cell_list=False, **kw)
    assert a.stats.fired > 0
    for (ta, pa, ya), (tb, pb, yb) in zip(a.snapshots, b.snapshots):
        assert ta == tb
        assert np.array_equal(pa, pb) and np.array_equal(ya, yb)


def test_thinning_and_exhaustive_same_law():
    net = parse_network(CORPUS["special_tophat"])
    rho = analytic_profile("uniform", (0.5, 0.5), 4)
    kw = dict(net=net, diff=DiffusionSpec((0.1,)), rho0=rho, N=100, t_final=0.3, dt=0.01)
    ends = {}
    for sampler in ("thinning", "exhaustive"):
        ends[sampler] = [simulate(seed=21, run=r, sampler=sampler, **kw).counts[-1, 0] for r in range(300)]
    # same seed but different consumption of the stream, so the samples are independent
    assert stats.ttest_ind(ends["thinning"], ends["exhaustive"], equal_var=False).pvalue > 0.001
    assert stats.ks_2samp(ends["thinning"], ends["exhaustive"]).pvalue > 0.001


def test_zero_kernel_keeps_type_marginal():
    net = parse_network("kernel k = constant(rate=0)\nS1 + S2 -> S2 + S2 @ k")
    tr = simulate(net, DiffusionSpec((0.1,)), analytic_profile("uniform", (0.4, 0.6), 4), 500, 0.2,
                  0.01, seed=2, record_times=[0.1, 0.2])
    assert np.all(tr.counts == tr.counts[0])


def test_stale_rejection_rare():
    net = parse_network(CORPUS["special_constant"])
    tr = simulate(net, DiffusionSpec((0.05,)), analytic_profile("uniform", (0.5, 0.5), 4), 4096,
                  math.log(2), 1e-3, seed=1)
    assert tr.stats.fired > 500
    assert tr.stats.rejection_rate < 0.01


def test_unknown_sampler():
    with pytest.raises(ValueError):
        step(_state([0, 0.5], [1, 2]), SPECIAL, NO_SIG, 0.01, sampler="gillespie")


# simulate

def test_t_zero_single_record():
    rho = analytic_profile("uniform", (0.5, 0.5), 4)
    tr = simulate(SPECIAL, NO_SIG, rho, 50, 0.0, 0.01, seed=8, bins=4)
    init = sample_initial(rho, 50, make_rng(8))
    assert tr.times == [0.0]
    assert np.array_equal(tr.counts[0], init.counts())
    assert np.array_equal(tr.histograms[0].values, empirical_histogram(init, 4).values)


def test_counts_sum_to_n_and_determinism():
    rho = analytic_profile("cosine", (0.5, 0.5), 8)
    kw = dict(net=SPECIAL, diff=DiffusionSpec((0.1,)), rho0=rho, N=256, t_final=0.1, dt=0.01,
              record_times=[0.0, 0.05, 0.1], bins=8)
    a = simulate(seed=5, **kw)
    b = simulate(seed=5, **kw)
    c = simulate(seed=5, run=1, **kw)
    assert np.all(a.counts.sum(axis=1) == 256)
    assert np.array_equal(a.counts, b.counts)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a.histograms, b.histograms))
    assert not all(np.array_equal(x.values, y.values) for x, y in zip(a.histograms, c.histograms))


def test_record_times_exact():
    rho = analytic_profile("uniform", (0.5, 0.5), 4)
    tr = simulate(SPECIAL, NO_SIG, rho, 10, 0.1, 0.015, record_times=[0.05, 0.1])
    assert tr.times == [0.0, 0.05, 0.1]


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(sorted(CORPUS)), st.integers(0, 10**6), st.sampled_from([1, 2]))
def test_step_invariants(name, seed, d):
    net = parse_network(CORPUS[name])
    rho = analytic_profile("uniform", (1.0 / net.n_species,) * net.n_species, 4, d)
    s = sample_initial(rho, 60, seed)
    for _ in range(5):
        step(s, net, DiffusionSpec((0.3,)), 0.005)
    assert s.N == 60
    assert np.all((s.positions >= 0) & (s.positions < 1))
    assert s.types.min() >= 1 and s.types.max() <= net.n_species


def test_ensemble_worker_count_irrelevant():
    rho = analytic_profile("uniform", (0.5, 0.5), 4)
    kw = dict(net=SPECIAL, diff=DiffusionSpec((0.1,)), rho0=rho, N=64, t_final=0.05, dt=0.01, seed=9)
    one = run_ensemble(3, threads=1, **kw)
    two = run_ensemble(3, threads=2, **kw)
    assert [t.run for t in two] == [0, 1, 2]
    assert all(np.array_equal(a.counts, b.counts) for a, b in zip(one, two))


# histograms

def test_histogram_single_bin():
    s = _state(np.full(10, 0.3), [1] * 10)
    h = empirical_histogram(s, 4)
    assert h.values[0, 1] == 4.0
    assert h.values.sum() == 4.0 and h.values[1].sum() == 0


def test_histogram_integrates_to_one_2d():
    s = sample_initial(analytic_profile("cosine", (0.3, 0.7), 8, 2), 999, seed=2)
    assert empirical_histogram(s, 5).total_mass() == pytest.approx(1.0, abs=1e-14)


def test_histogram_uniform_sample():
    N = 100000
    s = sample_initial(analytic_profile("uniform", (1.0,), 8), N, seed=12)
    mass = empirical_histogram(s, 8).values[0] / 8
    assert np.all(np.abs(mass - 1 / 8) <= 4 * math.sqrt((1 / 8) * (7 / 8) / N))


def test_writers():
    rho = analytic_profile("uniform", (0.5, 0.5), 4)
    tr = simulate(SPECIAL, NO_SIG, rho, 4, 0.0, 0.01, bins=2, snapshots=True)
    buf = io.StringIO()
    write_counts([tr], buf, 2)
    assert buf.getvalue().splitlines()[0] == "time,run,species_1,species_2"
    buf = io.StringIO()
    write_histograms([tr], buf)
    assert buf.getvalue().splitlines()[0] == "time,run,species,bin_index,density"
    assert len(buf.getvalue().splitlines()) == 1 + 2 * 2
    buf = io.StringIO()
    write_snapshots([tr], buf, 1)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "run,time,particle,x_1,type" and len(lines) == 5
