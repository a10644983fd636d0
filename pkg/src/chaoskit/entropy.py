"""Relative-entropy bookkeeping for a mean-field solution on a grid.

For a reaction ``(k, l) -> (k', l')`` and a point ``y = (x, xi)``::

    A(y)     = [xi == l'] (Phi*u_k)(x) u_l(x) / rho(x, xi) - [xi == l] (Phi*u_k)(x)
    Ahat(y)  = [xi == k'] (Phi*u_l)(x) u_k(x) / rho(x, xi) - [xi == k] (Phi*u_l)(x)
    B(y, y') = Phi(x - x') ([xi, xi' == k', l'] u_k(x) u_l(x') / (rho(y) rho(y'))
                            - [xi, xi' == k, l])
    F(y, y') = A(y') + Ahat(y) - B(y, y')

and ``f`` is the sum of ``F`` over reactions. With the grid convolution used
here the four marginal identities of these functions hold exactly up to
rounding, on any grid.
"""
from __future__ import annotations

import math

import numpy as np

from .crn import ReactionNetwork
from .field import DensityField, coarsen
from .kernels import kernel_norms, kernel_table
from .meanfield import periodic_convolve

DIVISION_GUARD = 1e-14
# pair tables above this many (y, y') entries per reaction switch to convolution quadrature
DENSE_LIMIT = 2**24


class DivisionGuardError(ValueError):
    """A density in a denominator is at or below ``DIVISION_GUARD``."""


class EntropyFunctions:
    """The functions A, Ahat, B and F for one density snapshot."""

    def __init__(self, net: ReactionNetwork, field: DensityField, guard: float = DIVISION_GUARD):
        if field.n_species != net.n_species:
            raise ValueError(f"field has {field.n_species} species, network has {net.n_species}")
        self.net = net
        self.field = field
        self.u = field.values
        self.M, self.d = field.M, field.d
        self.cellvol = field.cellvol
        self.active = [net.kernel(r).rate > 0 for r in net.reactions]
        for r, on in zip(net.reactions, self.active):
            if not on:
                continue
            for s in set(r.output):
                lo = self.u[s - 1].min()
                if lo <= guard:
                    raise DivisionGuardError(
                        f"species {s} density reaches {lo:.3e} <= {guard}; quotient undefined"
                    )
        self._conv = {}
        for r, on in zip(net.reactions, self.active):
            if on:
                for s in set(r.input):
                    key = (r.kernel_name, s)
                    if key not in self._conv:
                        self._conv[key] = periodic_convolve(net.kernel(r), self.u[s - 1])

    def _reaction(self, r):
        return self.net.reactions[r] if isinstance(r, (int, np.integer)) else r

    def _conv_of(self, rx, s):
        return self._conv[(rx.kernel_name, s)]

    def A_table(self, r) -> np.ndarray:
        """``A[xi-1, cell]`` on the grid."""
        return self._a_like(r, hat=False)

    def Ahat_table(self, r) -> np.ndarray:
        return self._a_like(r, hat=True)

    def _a_like(self, r, hat: bool) -> np.ndarray:
        idx = r if isinstance(r, (int, np.integer)) else self.net.reactions.index(r)
        rx = self.net.reactions[idx]
        out = np.zeros_like(self.u)
        if not self.active[idx]:
            return out
        k, l = rx.input
        kp, lp = rx.output
        if hat:
            k, l, lp = l, k, kp
        conv = self._conv_of(rx, k)  # Phi * u_k
        out[lp - 1] += conv * self.u[l - 1] / self.u[lp - 1]
        out[l - 1] -= conv
        return out

    def kernel_matrix(self, r) -> np.ndarray:
        """``Phi(x_c - x_c')`` over flattened cell pairs."""
        rx = self._reaction(r)
        M, d = self.M, self.d
        tab = kernel_table(self.net.kernel(rx), M, d).ravel()
        idx = np.indices((M,) * d).reshape(d, -1).T
        off = (idx[:, None, :] - idx[None, :, :]) % M
        lin = np.ravel_multi_index(np.moveaxis(off, -1, 0), (M,) * d)
        return tab[lin]

    def B_blocks(self, r) -> dict:
        """Nonzero species blocks ``{(xi, xi'): matrix over (cell, cell')}`` of B."""
        idx = r if isinstance(r, (int, np.integer)) else self.net.reactions.index(r)
        rx = self.net.reactions[idx]
        if not self.active[idx]:
            return {}
        k, l = rx.input
        kp, lp = rx.output
        phi = self.kernel_matrix(rx)
        flat = self.u.reshape(self.u.shape[0], -1)
        left = flat[k - 1] / flat[kp - 1]
        right = flat[l - 1] / flat[lp - 1]
        blocks = {(kp, lp): phi * np.outer(left, right)}
        blocks[(k, l)] = blocks.get((k, l), 0.0) - phi
        return blocks

    def point(self, y):
        cell, xi = y
        if not isinstance(cell, (int, np.integer)):
            cell = int(np.ravel_multi_index(tuple(cell), (self.M,) * self.d))
        if not 1 <= xi <= self.net.n_species:
            raise ValueError(f"species {xi} out of range")
        return int(cell), int(xi)

    def B_value(self, r, y, yp) -> float:
        rx = self._reaction(r)
        if not self.net.kernel(rx).rate > 0:
            return 0.0
        (c, xi), (cp, xip) = self.point(y), self.point(yp)
        k, l = rx.input
        kp, lp = rx.output
        M, d = self.M, self.d
        a = np.array(np.unravel_index(c, (M,) * d))
        b = np.array(np.unravel_index(cp, (M,) * d))
        phi = kernel_table(self.net.kernel(rx), M, d)[tuple((a - b) % M)]
        flat = self.u.reshape(self.u.shape[0], -1)
        val = 0.0
        if (xi, xip) == (kp, lp):
            val += flat[k - 1, c] * flat[l - 1, cp] / (flat[xi - 1, c] * flat[xip - 1, cp])
        if (xi, xip) == (k, l):
            val -= 1.0
        return float(phi * val)


def eval_f_components(ef: EntropyFunctions, r, y, yp):
    """``(A(y'), Ahat(y), B(y, y'), F(y, y'))`` for reaction ``r``."""
    c, xi = ef.point(y)
    cp, xip = ef.point(yp)
    n = ef.net.n_species
    a = ef.A_table(r).reshape(n, -1)[xip - 1, cp]
    ah = ef.Ahat_table(r).reshape(n, -1)[xi - 1, c]
    b = ef.B_value(r, (c, xi), (cp, xip))
    return float(a), float(ah), b, float(a + ah - b)


def eval_f(ef: EntropyFunctions, y, yp) -> float:
    """Sum of ``F`` over all reactions."""
    return sum(eval_f_components(ef, r, y, yp)[3] for r in range(ef.net.n_reactions))


def _dense(ef: EntropyFunctions) -> bool:
    return (ef.M**ef.d) ** 2 <= DENSE_LIMIT


def _b_marginals(ef: EntropyFunctions, r):
    """``(int B(y, .) rho(y) dy, int B(., y') rho(y') dy')`` as grids over the free point."""
    rx = ef.net.reactions[r]
    n = ef.net.n_species
    flat = ef.u.reshape(n, -1)
    first = np.zeros_like(flat)   # function of y'
    second = np.zeros_like(flat)  # function of y
    if not ef.active[r]:
        return first.reshape(ef.u.shape), second.reshape(ef.u.shape)
    if _dense(ef):
        for (xi, xip), blk in ef.B_blocks(r).items():
            first[xip - 1] += ef.cellvol * (flat[xi - 1] @ blk)
            second[xi - 1] += ef.cellvol * (blk @ flat[xip - 1])
    else:
        k, l = rx.input
        kp, lp = rx.output
        kern = ef.net.kernel(rx)
        left = (ef.u[k - 1] / ef.u[kp - 1]) * ef.u[kp - 1]
        right = (ef.u[l - 1] / ef.u[lp - 1]) * ef.u[lp - 1]
        first[lp - 1] += (periodic_convolve(kern, left) * (ef.u[l - 1] / ef.u[lp - 1])).ravel()
        second[kp - 1] += (periodic_convolve(kern, right) * (ef.u[k - 1] / ef.u[kp - 1])).ravel()
        first[l - 1] -= periodic_convolve(kern, ef.u[k - 1]).ravel()
        second[k - 1] -= periodic_convolve(kern, ef.u[l - 1]).ravel()
    return first.reshape(ef.u.shape), second.reshape(ef.u.shape)


def component_residuals(ef: EntropyFunctions) -> dict:
    """Max violations of the four component identities, per identity, over reactions."""
    out = {"int_A": 0.0, "int_Ahat": 0.0, "B_first": 0.0, "B_second": 0.0}
    for r in range(ef.net.n_reactions):
        A = ef.A_table(r)
        Ah = ef.Ahat_table(r)
        first, second = _b_marginals(ef, r)
        out["int_A"] = max(out["int_A"], abs(ef.cellvol * float((A * ef.u).sum())))
        out["int_Ahat"] = max(out["int_Ahat"], abs(ef.cellvol * float((Ah * ef.u).sum())))
        out["B_first"] = max(out["B_first"], float(np.abs(first - A).max()))
        out["B_second"] = max(out["B_second"], float(np.abs(second - Ah).max()))
    return out


def mean_zero_residual(ef: EntropyFunctions, component_tol: float | None = None):
    """Max over the free point of ``|int f rho|`` in each argument.

    Returns ``(res1, res2)`` where ``res1`` integrates out the first argument
    and ``res2`` the second. When ``component_tol`` is given, the four
    component identities are asserted to that tolerance as well.
    """
    mass = ef.cellvol * float(ef.u.sum())
    g1 = np.zeros_like(ef.u)  # int f(y, y') rho(y) dy, function of y'
    g2 = np.zeros_like(ef.u)  # int f(y, y') rho(y') dy', function of y
    for r in range(ef.net.n_reactions):
        A = ef.A_table(r)
        Ah = ef.Ahat_table(r)
        first, second = _b_marginals(ef, r)
        g1 += A * mass + ef.cellvol * float((Ah * ef.u).sum()) - first
        g2 += Ah * mass + ef.cellvol * float((A * ef.u).sum()) - second
    if component_tol is not None:
        comp = component_residuals(ef)
        worst = max(comp.values())
        if worst > component_tol:
            raise AssertionError(f"component identity residuals {comp} exceed {component_tol}")
    return float(np.abs(g1).max()), float(np.abs(g2).max())


def sup_bounds(ef: EntropyFunctions):
    """Per reaction: ``(sup|A|+|Ahat|, sup|B|, exact)``.

    Exact on the grid when the pair table is small enough; otherwise sup|B| is
    the upper bound ``sup Phi * max(|ratio product - 1|, ratio product, 1)``.
    """
    rows = []
    for r, rx in enumerate(ef.net.reactions):
        a = float((np.abs(ef.A_table(r)) + np.abs(ef.Ahat_table(r))).max())
        if not ef.active[r]:
            rows.append((a, 0.0, True))
            continue
        if _dense(ef):
            b = max(float(np.abs(blk).max()) for blk in ef.B_blocks(r).values())
            rows.append((a, b, True))
        else:
            k, l = rx.input
            kp, lp = rx.output
            rk = float((ef.u[k - 1] / ef.u[kp - 1]).max())
            rl = float((ef.u[l - 1] / ef.u[lp - 1]).max())
            linf = kernel_norms(ef.net.kernel(rx), ef.d)[1]
            rows.append((a, linf * max(rk * rl, 1.0), False))
    return rows


def k_t(ef: EntropyFunctions) -> float:
    """Sum over reactions of sup(|A| + |Ahat|) plus sup|B|."""
    return float(sum(a + b for a, b, _ in sup_bounds(ef)))


def comparability_constant(net: ReactionNetwork, fields) -> float:
    """Largest ratio ``u_k/u_k'`` or ``u_l/u_l'`` over reactions, grid points and snapshots."""
    if isinstance(fields, DensityField):
        fields = [fields]
    worst = 0.0
    for f in fields:
        for r in net.reactions:
            k, l = r.input
            kp, lp = r.output
            for a, b in ((k, kp), (l, lp)):
                den = f.values[b - 1]
                if den.min() <= DIVISION_GUARD:
                    return math.inf
                worst = max(worst, float((f.values[a - 1] / den).max()))
    return worst


def marginal_l1_distance(hist: DensityField, pde: DensityField, tol: float = 1e-6) -> float:
    """``cellvol * sum |hist - pde|`` for two normalized fields on the same grid."""
    if hist.values.shape != pde.values.shape:
        raise ValueError(f"shape mismatch {hist.values.shape} vs {pde.values.shape}")
    for name, f in (("hist", hist), ("pde", pde)):
        m = f.total_mass()
        if abs(m - 1.0) > tol:
            raise ValueError(f"{name} integrates to {m!r}, not 1 within {tol}")
    return hist.cellvol * float(np.abs(hist.values - pde.values).sum())


def relative_entropy(p, q) -> float:
    """Discrete ``sum p log(p/q)`` for probability vectors with ``q > 0`` on the support of ``p``."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def ckp_bound(h: float) -> float:
    """L1 bound ``sqrt(2 H)`` implied by a relative entropy ``H``."""
    return math.sqrt(2.0 * max(h, 0.0))


def ensemble_histogram(histograms) -> DensityField:
    hs = list(histograms)
    return hs[0].with_values(np.mean([h.values for h in hs], axis=0))


def l1_with_jackknife(histograms, pde: DensityField):
    """L1 distance of the ensemble-mean histogram and its leave-one-out standard error."""
    stack = np.array([h.values for h in histograms])
    R = len(stack)
    ref = pde if pde.M == histograms[0].M else coarsen(pde, histograms[0].M)
    full = marginal_l1_distance(histograms[0].with_values(stack.mean(axis=0)), ref)
    if R < 2:
        return full, math.nan
    total = stack.sum(axis=0)
    loo = np.empty(R)
    for i in range(R):
        loo[i] = marginal_l1_distance(histograms[0].with_values((total - stack[i]) / (R - 1)), ref)
    se = math.sqrt((R - 1) / R * float(np.sum((loo - loo.mean()) ** 2)))
    return full, se


def write_report(rows, fh) -> None:
    """Rows of ``(time, N, runs, l1, l1_stderr, K_t, C_T)``."""
    fh.write("time,N,runs,l1_distance,l1_stderr,K_t,C_T\n")
    for t, N, runs, l1, se, kt, ct in rows:
        fh.write(f"{float(t)!r},{int(N)},{int(runs)},{float(l1)!r},{float(se)!r},{float(kt)!r},{float(ct)!r}\n")
