"""Named experiment suites and their output files.

Every suite returns a list of :class:`Criterion` rows and writes its CSVs
into the configured output directory. ``summary.csv`` collects the rows,
``config.resolved`` echoes the configuration and ``run.log`` is the only file
that carries timestamps, so all CSVs are reproducible byte for byte.
"""
from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import entropy, ldp, operators
from .config import ExperimentConfig, parse_config
from .crn import closure, format_network, positive_species
from .field import DensityField, analytic_profile, coarsen, load_fields, save_fields
from .meanfield import mass_action_rates, solve_mass_action, solve_pde
from .particle import DiffusionSpec, run_ensemble, write_counts, write_histograms, write_snapshots

log = logging.getLogger("chaoskit")


@dataclass
class Criterion:
    id: str
    check: str
    value: float
    bound: float
    status: str  # pass, fail or skip

    @property
    def failed(self) -> bool:
        return self.status == "fail"


def _crit(cid, check, value, bound, ok) -> Criterion:
    return Criterion(cid, check, float(value), float(bound), "pass" if ok else "fail")


def write_summary(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("criterion,check,value,bound,status\n")
        for r in rows:
            fh.write(f"{r.id},{r.check},{r.value!r},{r.bound!r},{r.status}\n")


def initial_field(cfg: ExperimentConfig) -> DensityField:
    net = cfg.network
    if cfg.profile == "file":
        return load_fields(cfg.resolve_path(cfg.init_file))[0]
    masses = cfg.masses or (1.0 / net.n_species,) * net.n_species
    return analytic_profile(cfg.profile, masses, cfg.M, cfg.dim, cfg.amplitude)


def diffusion(cfg: ExperimentConfig) -> DiffusionSpec:
    n = cfg.network.n_species
    return DiffusionSpec(cfg.sigma * n if len(cfg.sigma) == 1 else cfg.sigma)


def _ensemble(cfg, rho0, N, leg, record_times, bins=None):
    return run_ensemble(
        cfg.runs,
        threads=cfg.threads or None,
        net=cfg.network,
        diff=diffusion(cfg),
        rho0=rho0,
        N=N,
        t_final=cfg.t_final,
        dt=cfg.dt,
        seed=cfg.seed,
        leg=leg,
        record_times=record_times,
        bins=bins,
        snapshots=cfg.snapshots,
        sampler=cfg.sampler,
        allow_large_dt=cfg.allow_large_dt,
    )


def _fmt(t: float) -> str:
    return f"{t:.6g}"


# --- suites --------------------------------------------------------------------


def suite_mass_action(cfg: ExperimentConfig, out: str) -> list[Criterion]:
    """Ensemble species fractions at ``t_final`` against the mass-action ODE."""
    net = cfg.network
    rho0 = initial_field(cfg)
    rates = mass_action_rates(net, rho0.d)
    times = sorted({0.0, *cfg.record_times, cfg.t_final})
    _, Y = solve_mass_action(net, rho0.masses(), rates, cfg.t_final, cfg.dt, record_times=times)
    ode = Y[-1]
    rows = []
    with open(os.path.join(out, "mass_action.csv"), "w") as fh:
        fh.write("N,species,particle_mean,stderr,ode,tolerance,rejection_rate,pass\n")
        for leg, N in enumerate(cfg.N):
            t0 = time.perf_counter()
            trajs = _ensemble(cfg, rho0, N, leg, times)
            log.info("mass_action N=%d runs=%d took %.2fs", N, cfg.runs, time.perf_counter() - t0)
            with open(os.path.join(out, f"counts_N{N}.csv"), "w") as cf:
                write_counts(trajs, cf, net.n_species)
            if cfg.snapshots:
                with open(os.path.join(out, f"snapshots_N{N}.csv"), "w") as sf:
                    write_snapshots(trajs, sf, rho0.d)
            frac = np.array([tr.counts[-1] / N for tr in trajs])
            mean = frac.mean(axis=0)
            se = frac.std(axis=0, ddof=1) / math.sqrt(len(trajs)) if len(trajs) > 1 else np.zeros_like(mean)
            fired = sum(tr.stats.fired for tr in trajs)
            rej = sum(tr.stats.rejected for tr in trajs) / fired if fired else 0.0
            for s in range(net.n_species):
                tol = max(0.02, 4 * se[s])
                dev = abs(mean[s] - ode[s])
                ok = dev <= tol
                fh.write(f"{N},{s + 1},{mean[s]!r},{se[s]!r},{ode[s]!r},{tol!r},{rej!r},{int(ok)}\n")
                rows.append(_crit("AC1", f"N={N} species {s + 1} fraction at t={_fmt(cfg.t_final)}",
                                  dev, tol, ok))
    return rows


def fit_loglog(Ns, values):
    """Least-squares slope of log(value) on log(N) and its standard error."""
    x = np.log(np.asarray(Ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(x) - 2
    if dof <= 0:
        return float(coef[0]), math.nan
    s2 = float(resid @ resid) / dof
    se = math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))
    return float(coef[0]), se


def suite_chaos(cfg: ExperimentConfig, out: str) -> list[Criterion]:
    """1-marginal L1 distance between particle histograms and the PDE, across N."""
    net = cfg.network
    rho0 = initial_field(cfg)
    if rho0.M % cfg.bins:
        raise ValueError(f"pde.M={rho0.M} must be a multiple of sim.bins={cfg.bins}")
    t0 = time.perf_counter()
    path_times = sorted({*np.linspace(0.0, cfg.t_final, 11).tolist(), cfg.t_final})
    snaps = solve_pde(net, diffusion(cfg), rho0, cfg.t_final, cfg.pde_dt, record_times=path_times)
    final = snaps[-1]
    log.info("chaos PDE M=%d took %.2fs", rho0.M, time.perf_counter() - t0)
    save_fields([coarsen(final, cfg.bins)], os.path.join(out, "pde_marginal.csv"))
    try:
        kt = entropy.k_t(entropy.EntropyFunctions(net, final))
    except entropy.DivisionGuardError:
        kt = math.nan
    ct = entropy.comparability_constant(net, snaps)
    report, dists = [], []
    for leg, N in enumerate(cfg.N):
        t0 = time.perf_counter()
        trajs = _ensemble(cfg, rho0, N, leg, [cfg.t_final], bins=cfg.bins)
        log.info("chaos N=%d runs=%d took %.2fs", N, cfg.runs, time.perf_counter() - t0)
        for tr in trajs:
            tr.histograms = tr.histograms[-1:]
        with open(os.path.join(out, f"histograms_N{N}.csv"), "w") as fh:
            write_histograms(trajs, fh)
        l1, se = entropy.l1_with_jackknife([tr.histograms[-1] for tr in trajs], final)
        dists.append(l1)
        report.append((cfg.t_final, N, cfg.runs, l1, se, kt, ct))
    with open(os.path.join(out, "entropy_report.csv"), "w") as fh:
        entropy.write_report(report, fh)
    rows = []
    if len(dists) >= 2:
        steps = np.diff(dists)
        worst = float(steps.max())
        rows.append(_crit("AC2", "L1 strictly decreasing in N (max successive change)", worst, 0.0, worst < 0))
    if len(dists) >= 3:
        slope, se = fit_loglog(cfg.N, dists)
        with open(os.path.join(out, "slope.csv"), "w") as fh:
            fh.write("slope,stderr\n")
            fh.write(f"{slope!r},{se!r}\n")
        rows.append(_crit("AC2", "log-log slope >= -0.75", slope, -0.75, slope >= -0.75))
        rows.append(_crit("AC2", "log-log slope <= -0.25", slope, -0.25, slope <= -0.25))
    return rows


def suite_pde(cfg: ExperimentConfig, out: str) -> list[Criterion]:
    """Mass conservation, positivity on the closure and the mean-zero identities."""
    net = cfg.network
    rho0 = initial_field(cfg)
    t_check = min(1.0, cfg.t_final)
    times = sorted({*cfg.record_times, t_check, cfg.t_final})
    t0 = time.perf_counter()
    snaps = solve_pde(net, diffusion(cfg), rho0, cfg.t_final, cfg.pde_dt, record_times=times,
                      check_mass=False)
    log.info("pde M=%d t=%g took %.2fs", rho0.M, cfg.t_final, time.perf_counter() - t0)
    save_fields(snaps, os.path.join(out, "fields.csv"))
    m0 = rho0.total_mass()
    drift = max(abs(s.total_mass() - m0) for s in snaps)
    rows = [_crit("AC3", f"max mass drift over [0,{_fmt(cfg.t_final)}]", drift, 1e-8, drift <= 1e-8)]
    cl = closure(net, positive_species(rho0.masses()))
    at = next(s for s in snaps if s.time == t_check)
    for s in range(1, net.n_species + 1):
        u = at.values[s - 1]
        if s in cl:
            lo = float(u.min())
            rows.append(_crit("AC3", f"species {s} (closure) min at t={_fmt(t_check)}", lo, 0.0, lo > 0))
        else:
            hi = max(float(np.abs(f.values[s - 1]).max()) for f in snaps)
            rows.append(_crit("AC3", f"species {s} (outside closure) max |u|", hi, 1e-14, hi <= 1e-14))
    rows += mean_zero_rows(net, snaps[-1], cfg.M, cfg.dim)
    return rows


def mean_zero_rows(net, field: DensityField, M: int, d: int) -> list[Criterion]:
    rows = []
    uniform = analytic_profile("uniform", field.masses(), M, d)
    for label, f, tol in (("solution", field, 1e-6), ("uniform", uniform, 1e-10)):
        try:
            ef = entropy.EntropyFunctions(net, f)
        except entropy.DivisionGuardError as exc:
            rows.append(Criterion("AC4", f"mean-zero residual ({label}): {exc}", math.nan, tol, "skip"))
            continue
        r1, r2 = entropy.mean_zero_residual(ef, component_tol=tol)
        res = max(r1, r2)
        rows.append(_crit("AC4", f"mean-zero residual ({label} M={f.M})", res, tol, res <= tol))
    return rows


def _ldp_statistic(cfg):
    if cfg.ldp_f == "zero":
        M = cfg.ldp_grid
        return ldp.PairStatistic(np.zeros((M, M))), np.full(M, 1.0 / M)
    return ldp.cos_product(cfg.ldp_grid)


def suite_ldp(cfg: ExperimentConfig, out: str) -> list[Criterion]:
    """Exponential moment, moment growth and Rio's martingale inequality."""
    f, rho = _ldp_statistic(cfg)
    res1, res2 = ldp.marginal_residuals(f, rho)
    if max(res1, res2) > 1e-10:
        f = ldp.center_function(f, rho)
    table, rows = [], []
    eta = ldp.eta_of(f) if f.linf > 0 else math.inf
    for leg, n in enumerate(cfg.ldp_n):
        t0 = time.perf_counter()
        if f.linf > 0:
            mean, ci = ldp.exp_moment_estimate(f, rho, n, eta, cfg.ldp_trials, cfg.seed, leg)
        else:
            mean, ci = 1.0, 0.0
        log.info("ldp exp moment n=%d took %.2fs", n, time.perf_counter() - t0)
        ok = mean + ci <= 2.0
        table.append(("exp_moment", n, 0, mean, 2.0, ci, ok))
        rows.append(_crit("AC5", f"exp moment + ci99 at N={n}", mean + ci, 2.0, ok))
        if n == 2:
            quad = ldp.exp_moment_pair_quadrature(f, rho, eta) if f.linf > 0 else 1.0
            dev = abs(mean - quad)
            table.append(("exp_moment_quadrature", n, 0, mean, quad, ci, dev <= ci))
            rows.append(_crit("AC5", "N=2 estimate vs pair quadrature (|diff| <= ci99)", dev, ci,
                              dev <= ci))
    bound = math.sqrt(2.0) * f.linf
    for row in ldp.moment_bound_check(f, rho, cfg.moment_n, cfg.k_max, cfg.moment_trials, cfg.seed):
        ok = row.value <= bound + row.ci
        table.append(("moment", cfg.moment_n, row.k, row.value, bound, row.ci, ok))
        rows.append(_crit("AC6", f"k={row.k} moment statistic <= sqrt2*linf + ci", row.value,
                          bound + row.ci, ok))
        if row.k == 1:
            ok1 = abs(row.raw) <= row.raw_ci
            table.append(("first_moment_zero", cfg.moment_n, 1, row.raw, 0.0, row.raw_ci, ok1))
    paths = ldp.sign_paths(cfg.mz_n)
    for p in cfg.mz_p:
        lhs, rhs = ldp.mz_verify(paths, p)
        if p == 2:
            gap = abs(lhs - rhs)
            ok = gap <= 1e-12
            table.append(("mz_equality", cfg.mz_n, p, lhs, rhs, 0.0, ok))
            rows.append(_crit("AC7", f"p=2 equality |lhs-rhs| n={cfg.mz_n}", gap, 1e-12, ok))
        else:
            ok = lhs <= rhs
            table.append(("mz_inequality", cfg.mz_n, p, lhs, rhs, 0.0, ok))
            rows.append(_crit("AC7", f"p={p:g} lhs <= rhs n={cfg.mz_n}", lhs, rhs, ok))
    with open(os.path.join(out, "ldp_results.csv"), "w") as fh:
        ldp.write_results(table, fh)
    return rows


def suite_operators(cfg: ExperimentConfig, out: str) -> list[Criterion]:
    """Generator/adjoint duality, permutation symmetry and rate-matrix conservation."""
    net = cfg.network
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(99,)))
    table, rows = [], []
    for N in cfg.ops_N:
        space = operators.DiscreteStateSpace(cfg.ops_m, N, net.n_species, cfg.dim)
        tag = f"m{space.m}n{space.n}d{space.d}"
        t0 = time.perf_counter()
        adj = perm = mass = dual = 0.0
        G = operators.generator_matrix(space, net)
        for _ in range(cfg.ops_pairs):
            phi, psi = space.random(rng, 2)
            s_phi = operators.apply_jump_generator(space, net, phi)
            s_psi = operators.apply_jump_adjoint(space, net, psi)
            adj = max(adj, abs(space.inner(s_phi, psi) - space.inner(phi, s_psi)))
            mass = max(mass, abs(space.vol * float(s_psi.sum())))
            dual = max(dual, float(np.abs(G @ phi.ravel() - s_phi.ravel()).max()),
                       float(np.abs(G.T @ psi.ravel() - s_psi.ravel()).max()))
        for _ in range(min(cfg.ops_pairs, 10)):
            perm = max(perm, operators.permutation_defect(space, net, space.random(rng)[0]))
        colsum = float(np.abs(np.asarray(G.sum(axis=1))).max())
        offdiag = G.copy()
        offdiag.setdiag(0)
        neg = float(-min(offdiag.min(), 0.0))
        log.info("operators N=%d (%d states) took %.2fs", N, space.size, time.perf_counter() - t0)
        checks = [
            ("adjoint", adj, 1e-12, "AC8"),
            ("permutation", perm, 0.0, "AC8"),
            ("adjoint_mass", mass, 1e-14, "AC8"),
            ("rate_colsum", colsum, 1e-14, "AC8"),
            ("rate_offdiag_negative", neg, 0.0, None),
            ("matrix_vs_operator", dual, 1e-12, None),
        ]
        for name, val, tol, cid in checks:
            ok = val <= tol
            table.append((name, tag, N, val, tol, ok))
            if cid:
                rows.append(_crit(cid, f"{name} N={N} {tag}", val, tol, ok))
    ex_space = operators.DiscreteStateSpace(cfg.exch_m, max(cfg.ops_N), net.n_species, cfg.dim)
    if ex_space.size <= 4096:
        psi0 = operators.symmetrize(ex_space, np.abs(ex_space.random(rng)[0]))
        ex = operators.exchangeability_defect(ex_space, net, psi0, cfg.exch_t)
        table.append(("exchangeability", f"m{ex_space.m}n{ex_space.n}d{ex_space.d}", ex_space.N, ex, 1e-12,
                      ex <= 1e-12))
    lap = operators.laplacian_matrix(cfg.ops_m, cfg.dim)
    asym = float(abs(lap - lap.T).max())
    table.append(("laplacian_symmetry", f"m{cfg.ops_m}d{cfg.dim}", 1, asym, 0.0, asym == 0.0))
    with open(os.path.join(out, "operator_results.csv"), "w") as fh:
        operators.write_results(table, fh)
    return rows


def _cos_phi(pos, types):
    return np.cos(2 * np.pi * pos[:, 0])


def _cos_lap(pos, types):
    return -((2 * np.pi) ** 2) * np.cos(2 * np.pi * pos[:, 0])


def cell_average_cos(rho0: DensityField) -> float:
    """Exact ``int cos(2 pi x_1) rho0`` for a piecewise-constant field."""
    M = rho0.M
    edges = np.arange(M + 1) / M
    per_cell = (np.sin(2 * np.pi * edges[1:]) - np.sin(2 * np.pi * edges[:-1])) / (2 * np.pi)
    marg = rho0.values.sum(axis=0)
    for _ in range(rho0.d - 1):
        marg = marg.sum(axis=-1)
    marg = marg * float(M) ** (-(rho0.d - 1))
    return float(per_cell @ marg)


def suite_dynkin(cfg: ExperimentConfig, out: str) -> list[Criterion]:
    """Dynkin residual of ``cos(2 pi x_1)`` at dt and dt/2, plus the heat closed form."""
    net = cfg.network
    rho0 = initial_field(cfg)
    diff = diffusion(cfg)
    legs = []
    for leg, dt in enumerate((cfg.dt, cfg.dt / 2)):
        t0 = time.perf_counter()
        res, start, end = operators.dynkin_samples(net, diff, rho0, cfg.dynkin_N, _cos_phi, _cos_lap,
                                                    cfg.dynkin_t, dt, cfg.dynkin_runs, cfg.seed, leg)
        log.info("dynkin dt=%g took %.2fs", dt, time.perf_counter() - t0)
        legs.append((dt, operators.mean_ci(res), end))
    table, rows = [], []
    for dt, (m, ci), _ in legs:
        table.append((f"dynkin_dt={dt!r}", "cos", cfg.dynkin_N, m, ci, abs(m) <= ci))
        rows.append(_crit("AC9", f"Dynkin residual dt={dt:g} (|mean| <= ci99)", abs(m), ci, abs(m) <= ci))
    ex, exci = operators.extrapolate(legs[0][1], legs[1][1])
    table.append(("dynkin_extrapolated", "cos", cfg.dynkin_N, ex, exci, abs(ex) <= exci))
    rows.append(_crit("AC9", "Dynkin residual extrapolated to dt=0", abs(ex), exci, abs(ex) <= exci))
    sig = set(diff.array(net.n_species))
    if not net.reactions and len(sig) == 1:
        s = sig.pop()
        decay = math.exp(-0.5 * s**2 * (2 * np.pi) ** 2 * cfg.dynkin_t)
        expected = decay * cell_average_cos(rho0)
        for dt, _, end in legs:
            m, ci = operators.mean_ci(end)
            gap = abs(m - expected)
            table.append((f"heat_closed_form_dt={dt!r}", "cos", cfg.dynkin_N, m - expected, ci, gap <= ci))
            rows.append(_crit("AC9", f"heat expectation vs closed form dt={dt:g}", gap, ci, gap <= ci))
    with open(os.path.join(out, "dynkin_results.csv"), "w") as fh:
        operators.write_results(table, fh)
    return rows


SUITES = {
    "mass_action_match": suite_mass_action,
    "chaos_scaling": suite_chaos,
    "pde": suite_pde,
    "ldp_suite": suite_ldp,
    "operator_suite": suite_operators,
    "dynkin": suite_dynkin,
}


def _attach_log(out: str):
    handler = logging.FileHandler(os.path.join(out, "run.log"), mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def run_experiment(cfg: ExperimentConfig, output: str | None = None, experiment: str | None = None):
    """Run one suite. Returns ``(exit_status, rows)``; status 1 on any failure."""
    out = output or cfg.output
    os.makedirs(out, exist_ok=True)
    name = experiment or cfg.experiment
    with open(os.path.join(out, "config.resolved"), "w") as fh:
        fh.write(cfg.echo())
    if cfg.network is not None:
        with open(os.path.join(out, "network.crn"), "w") as fh:
            fh.write(format_network(cfg.network))
    handler = _attach_log(out)
    rows: list[Criterion] = []
    status = 0
    try:
        log.info("start %s", name)
        t0 = time.perf_counter()
        rows = SUITES[name](cfg, out)
        log.info("finished %s in %.2fs", name, time.perf_counter() - t0)
    except Exception as exc:  # keep partial outputs, report and fail
        log.exception("suite %s failed: %s", name, exc)
        rows.append(Criterion("ERROR", f"{type(exc).__name__}: {exc}".replace(",", ";"), math.nan,
                              math.nan, "fail"))
    finally:
        write_summary(rows, os.path.join(out, "summary.csv"))
        log.removeHandler(handler)
        handler.close()
    if any(r.failed for r in rows):
        status = 1
    return status, rows


# --- built-in acceptance configurations -------------------------------------------

SPECIAL_CONSTANT = "kernel k = constant(rate=1); S1 + S2 -> S2 + S2 @ k"
SPECIAL_TOPHAT = "kernel k = tophat(radius=0.2, rate=3); S1 + S2 -> S2 + S2 @ k"
THREE_SPECIES = ("kernel a = tophat(radius=0.3, rate=2); kernel b = constant(rate=1.5); "
                 "S1 + S2 -> S3 + S3 @ a; S3 + S3 -> S1 + S2 @ b; S1 + S1 -> S1 + S2 @ a")
FOUR_SPECIES = ("kernel a = tophat(radius=0.2, rate=3); kernel g = gaussian(width=0.1, rate=2); "
                "S1 + S2 -> S2 + S2 @ a; S3 + S4 -> S3 + S3 @ g")
SELF_REACTION = "kernel a = tophat(radius=0.25, rate=2); S1 + S1 -> S1 + S2 @ a"

BUILTIN = {
    "mass_action": [f"""
experiment = mass_action_match
network.inline = {SPECIAL_CONSTANT}
sim.sigma = 0.05
sim.N = 4096
sim.runs = 32
sim.dt = 1e-3
sim.t_final = ln2
init.profile = uniform
init.masses = 0.5, 0.5
seed = 1
"""],
    "chaos": [f"""
experiment = chaos_scaling
network.inline = {SPECIAL_TOPHAT}
sim.sigma = 0.05
sim.N = 256, 512, 1024, 2048, 4096
sim.runs = 64
sim.dt = 1e-3
sim.t_final = 0.5
sim.bins = 32
init.profile = cosine
init.masses = 0.5, 0.5
init.amplitude = 0.5
pde.M = 1024
seed = 2
"""],
    "pde": [f"""
experiment = pde
network.inline = {net}
sim.sigma = 0.05
sim.t_final = 2
init.profile = cosine
init.masses = {masses}
pde.M = 128
pde.dt = 1e-3
seed = 3
""" for net, masses in (
        (SPECIAL_TOPHAT, "0.5, 0.5"),
        (THREE_SPECIES, "0.4, 0.3, 0.3"),
        (FOUR_SPECIES, "0.3, 0.3, 0.4, 0"),
        (SELF_REACTION, "0.6, 0.4"),
    )],
    "ldp": ["""
experiment = ldp_suite
ldp.f = cos_product
ldp.grid = 64
ldp.n = 2, 8, 64, 256
ldp.trials = 100000
ldp.moment_n = 64
ldp.k_max = 6
ldp.mz_n = 10
ldp.mz_p = 2, 3, 4, 6
seed = 4
"""],
    "operators": [f"""
experiment = operator_suite
network.inline = {THREE_SPECIES}
ops.m = 8
ops.N = 2, 3
ops.pairs = 100
seed = 5
"""],
    "dynkin": ["""
experiment = dynkin
network.inline = species: S1
sim.sigma = 0.5
sim.dt = 0.01
init.profile = cosine
init.masses = 1
pde.M = 64
dynkin.N = 64
dynkin.t = 0.1
dynkin.runs = 400
seed = 6
"""],
}


def builtin_configs(suite: str) -> list[ExperimentConfig]:
    if suite not in BUILTIN:
        raise KeyError(f"unknown suite {suite!r}; choose from {sorted(BUILTIN) + ['determinism', 'all']}")
    return [parse_config(text) for text in BUILTIN[suite]]


def _csv_bytes(directory: str) -> dict:
    out = {}
    for name in sorted(os.listdir(directory)):
        if name.endswith(".csv"):
            with open(os.path.join(directory, name), "rb") as fh:
                out[name] = fh.read()
    return out


def determinism_check(out: str) -> list[Criterion]:
    """Run the mass-action and chaos suites twice; every CSV must match byte for byte."""
    rows = []
    for suite in ("mass_action", "chaos"):
        for q, cfg in enumerate(builtin_configs(suite)):
            blobs = []
            for rep in ("a", "b"):
                d = os.path.join(out, f"determinism_{suite}{q}_{rep}")
                run_experiment(cfg, output=d)
                blobs.append(_csv_bytes(d))
            same = blobs[0] == blobs[1] and len(blobs[0]) > 0
            diff = sorted(k for k in set(blobs[0]) | set(blobs[1]) if blobs[0].get(k) != blobs[1].get(k))
            rows.append(_crit("AC10", f"{suite} rerun CSVs identical ({len(blobs[0])} files)",
                              float(len(diff)), 0.0, same))
    return rows


def run_check(suite: str, out: str):
    """Run a built-in acceptance suite; ``all`` runs every one. Returns ``(status, rows)``."""
    names = list(BUILTIN) + ["determinism"] if suite == "all" else [suite]
    rows: list[Criterion] = []
    for name in names:
        if name == "determinism":
            d = os.path.join(out, "determinism")
            os.makedirs(d, exist_ok=True)
            rows += determinism_check(d)
            continue
        for q, cfg in enumerate(builtin_configs(name)):
            _, r = run_experiment(cfg, output=os.path.join(out, f"{name}{q}"))
            rows += r
    os.makedirs(out, exist_ok=True)
    write_summary(rows, os.path.join(out, "summary.csv"))
    return (1 if any(r.failed for r in rows) else 0), rows
