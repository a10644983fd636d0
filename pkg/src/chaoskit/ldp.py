"""Concentration checks for U-statistics of centred bounded pair functions.

The state space is discrete: ``P`` points with sampling weights ``rho``, and a
pair function is a ``(P, P)`` table. Marginal integrals are then finite sums,
so centring and conditional means are exact up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Z99 = 2.5758293035489004  # two-sided 99% normal quantile
_CHUNK = 8192


@dataclass(frozen=True)
class PairStatistic:
    """Tabulated pair function ``table[p, q] = f(y_p, y_q)``."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("pair table must be square")
        if not np.all(np.isfinite(t)):
            raise ValueError("pair table must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def size(self) -> int:
        return self.table.shape[0]

    @property
    def linf(self) -> float:
        return float(np.abs(self.table).max()) if self.table.size else 0.0


def _check_rho(rho, size: int | None = None, tol: float = 1e-12) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1 or (size is not None and len(rho) != size):
        raise ValueError("rho must be a vector matching the pair table")
    if np.any(rho < 0) or abs(rho.sum() - 1.0) > tol:
        raise ValueError(f"rho must be a probability vector (sum={rho.sum()!r})")
    return rho


def grid_nodes(M: int) -> np.ndarray:
    """Nodes ``p/M`` of the discrete 1-torus."""
    return np.arange(M) / M


def cos_product(M: int = 64) -> tuple[PairStatistic, np.ndarray]:
    """``cos(2 pi x) cos(2 pi x')`` on the grid nodes with uniform weights; sup norm 1."""
    c = np.cos(2 * np.pi * grid_nodes(M))
    return PairStatistic(np.outer(c, c)), np.full(M, 1.0 / M)


def marginal_residuals(f: PairStatistic, rho) -> tuple[float, float]:
    """``(max_q |sum_p rho_p f_pq|, max_p |sum_q f_pq rho_q|)``."""
    rho = _check_rho(rho, f.size)
    return float(np.abs(rho @ f.table).max()), float(np.abs(f.table @ rho).max())


def center_function(f_raw: PairStatistic, rho) -> PairStatistic:
    """Remove both conditional means: ``f - E[f|y] - E[f|y'] + E[f]``."""
    rho = _check_rho(rho, f_raw.size)
    t = f_raw.table
    row = t @ rho
    col = rho @ t
    mean = float(rho @ row)
    return PairStatistic(t - row[:, None] - col[None, :] + mean)


def eta_of(f: PairStatistic) -> float:
    """Scale ``2 sqrt(2) e ||f||_inf``."""
    linf = f.linf
    if linf == 0:
        raise ValueError("eta is undefined for f == 0; the exponential moment is 1")
    return 2.0 * math.sqrt(2.0) * math.e * linf


def _rng(seed, leg: int = 0, chunk: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(leg), int(chunk))))


def offdiag_sums(f: PairStatistic, rho, n: int, trials: int, seed: int = 0, leg: int = 0) -> np.ndarray:
    """Samples of ``sum_{i != j} f(Y_i, Y_j)`` for ``n`` i.i.d. draws from ``rho``.

    Only the occupation counts of the draws matter, so each trial draws a
    multinomial count vector ``c`` and returns ``c^T f c - sum_p c_p f_pp``.
    Trials are generated in chunks with their own derived streams.
    """
    rho = _check_rho(rho, f.size)
    if n < 2:
        raise ValueError("need n >= 2")
    if trials < 1:
        raise ValueError("need trials >= 1")
    t = f.table
    diag = np.diag(t)
    out = np.empty(trials)
    for chunk, start in enumerate(range(0, trials, _CHUNK)):
        m = min(_CHUNK, trials - start)
        c = _rng(seed, leg, chunk).multinomial(n, rho, size=m).astype(float)
        out[start:start + m] = np.einsum("ij,ij->i", c @ t, c) - c @ diag
    return out


def exp_moment_estimate(f: PairStatistic, rho, n: int, eta: float, trials: int, seed: int = 0,
                        leg: int = 0) -> tuple[float, float]:
    """Monte Carlo ``E exp(sum_{i!=j} f(Y_i,Y_j) / (eta n))`` and its 99% half-width."""
    if trials < 1000:
        raise ValueError("need trials >= 1000")
    if not eta > 0:
        raise ValueError("eta must be positive")
    if f.linf == 0:
        return 1.0, 0.0
    s = offdiag_sums(f, rho, n, trials, seed, leg)
    vals = np.exp(s / (eta * n))
    return float(vals.mean()), float(Z99 * vals.std(ddof=1) / math.sqrt(trials))


def exp_moment_pair_quadrature(f: PairStatistic, rho, eta: float) -> float:
    """Exact n=2 moment ``sum_pq rho_p rho_q exp((f_pq + f_qp) / (2 eta))``."""
    rho = _check_rho(rho, f.size)
    e = np.exp((f.table + f.table.T) / (2.0 * eta))
    return float(rho @ e @ rho)


def coupled_eta_means(f: PairStatistic, rho, n: int, etas, trials: int, seed: int = 0):
    """Exponential-moment means for several scales on one shared sample.

    Returns ``(means, ci99)``; ``ci99[i]`` is the half-width for the difference
    ``means[i] - means[i+1]``.
    """
    s = offdiag_sums(f, rho, n, trials, seed)
    vals = np.array([np.exp(s / (eta * n)) for eta in etas])
    diffs = vals[:-1] - vals[1:]
    ci = Z99 * diffs.std(axis=1, ddof=1) / math.sqrt(trials)
    return vals.mean(axis=1), ci


@dataclass(frozen=True)
class MomentRow:
    k: int
    value: float        # k^{-1} |E A^k|^{1/k}
    ci: float           # bootstrap 99% half-width of value
    raw: float          # E A^k
    raw_ci: float       # bootstrap 99% half-width of E A^k


def moment_bound_check(f: PairStatistic, rho, n: int, k_max: int, trials: int, seed: int = 0,
                       n_boot: int = 200) -> list[MomentRow]:
    """``k^{-1}|E A^k|^{1/k}`` for ``A = n^{-1} sum_{i!=j} f(Y_i, Y_j)``, k = 1..k_max."""
    if not 1 <= k_max <= 8:
        raise ValueError("k_max must be in 1..8")
    if f.linf == 0:
        return [MomentRow(k, 0.0, 0.0, 0.0, 0.0) for k in range(1, k_max + 1)]
    a = offdiag_sums(f, rho, n, trials, seed) / n
    powers = np.stack([a**k for k in range(1, k_max + 1)])
    raw = powers.mean(axis=1)
    boot_rng = _rng(seed, leg=1)
    boot = np.empty((n_boot, k_max))
    for b in range(n_boot):
        idx = boot_rng.integers(0, trials, trials)
        boot[b] = powers[:, idx].mean(axis=1)
    ks = np.arange(1, k_max + 1)

    def stat(m):
        return np.abs(m) ** (1.0 / ks) / ks

    val = stat(raw)
    bstat = stat(boot)
    rows = []
    for q, k in enumerate(ks):
        lo, hi = np.quantile(bstat[:, q], [0.005, 0.995])
        rlo, rhi = np.quantile(boot[:, q], [0.005, 0.995])
        rows.append(MomentRow(int(k), float(val[q]), float((hi - lo) / 2), float(raw[q]),
                              float((rhi - rlo) / 2)))
    return rows


def exp_lemma_check(z, k_max: int = 8) -> tuple[float, float]:
    """Empirical ``gamma = max_k k^{-1}|E Z^k|^{1/k}`` and ``E exp(Z / (2 e gamma))``."""
    z = np.asarray(z, dtype=float)
    ks = np.arange(1, k_max + 1)
    gamma = float(max(abs(np.mean(z**k)) ** (1.0 / k) / k for k in ks))
    if gamma == 0:
        return 0.0, 1.0
    return gamma, float(np.mean(np.exp(z / (2 * math.e * gamma))))


def martingale_differences(f: PairStatistic, samples) -> np.ndarray:
    """``D_k = sum_{i<k} f(Y_i, Y_k) + f(Y_k, Y_i)`` for sample indices ``Y_1..Y_n``."""
    s = np.asarray(samples, dtype=np.int64)
    if s.ndim != 1 or len(s) < 2:
        raise ValueError("need a sequence of at least two samples")
    F = f.table[np.ix_(s, s)]
    G = F + F.T
    return np.tril(G, -1).sum(axis=1)


def conditional_mean_residual(f: PairStatistic, rho, samples) -> float:
    """Max over k of ``|E[D_k | Y_1..Y_{k-1}]|`` computed by summing over ``Y_k``."""
    rho = _check_rho(rho, f.size)
    s = np.asarray(samples, dtype=np.int64)
    # E over Y of f(y_i, Y) + f(Y, y_i), for each earlier sample
    g = f.table @ rho + rho @ f.table
    partial = np.cumsum(g[s])
    return float(np.abs(np.concatenate([[0.0], partial[:-1]])).max())


def mz_verify(increments, p: float, weights=None, tol: float = 1e-10) -> tuple[float, float]:
    """``(||S_n||_p^2, (p-1) sum_k ||X_k||_p^2)`` for paths of martingale differences.

    ``increments`` has shape ``(paths, n)``. ``weights`` are path probabilities
    (uniform by default), so exhaustively enumerated paths give exact moments.
    The martingale property is checked first: within every group of paths
    sharing the prefix ``X_1..X_{k-1}``, the weighted mean of ``X_k`` must be
    within ``tol``.
    """
    X = np.atleast_2d(np.asarray(increments, dtype=float))
    if p < 2:
        raise ValueError("p must be >= 2")
    P, n = X.shape
    w = np.full(P, 1.0 / P) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (P,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be a probability vector over paths")
    for k in range(n):
        if k == 0:
            groups = np.zeros(P, dtype=np.int64)
        else:
            _, groups = np.unique(X[:, :k], axis=0, return_inverse=True)
            groups = groups.ravel()
        mass = np.bincount(groups, weights=w)
        mean = np.bincount(groups, weights=w * X[:, k])
        ok = mass > 0
        resid = np.abs(mean[ok] / mass[ok]).max()
        if resid > tol:
            raise ValueError(f"increment {k + 1} has conditional mean {resid:.3e} > {tol}")
    S = X.sum(axis=1)
    lhs = float(np.dot(w, np.abs(S) ** p)) ** (2.0 / p)
    rhs = (p - 1) * sum(float(np.dot(w, np.abs(X[:, k]) ** p)) ** (2.0 / p) for k in range(n))
    return lhs, rhs


def sign_paths(n: int, scale=None) -> np.ndarray:
    """All ``2^n`` Rademacher paths, optionally with predictable scaling.

    ``scale(prefix)`` maps the earlier signs ``eps_1..eps_{k-1}`` (a tuple) to
    the positive size of step ``k``, which keeps the martingale property.
    """
    if not 1 <= n <= 20:
        raise ValueError("n must be in 1..20")
    eps = 1.0 - 2.0 * ((np.arange(2**n)[:, None] >> np.arange(n)[::-1]) & 1)
    if scale is None:
        return eps
    out = eps.copy()
    for row in out:
        signs = tuple(row)
        for k in range(n):
            row[k] = signs[k] * float(scale(signs[:k]))
    return out


def write_results(rows, fh) -> None:
    """Rows of ``(check, n, p_or_k, value, bound, ci, pass)``."""
    fh.write("check,n,p_or_k,value,bound,ci,pass\n")
    for check, n, pk, value, bound, ci, ok in rows:
        fh.write(f"{check},{n},{pk},{float(value)!r},{float(bound)!r},{float(ci)!r},{int(bool(ok))}\n")
